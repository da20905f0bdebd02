import numpy as np
import pytest

from tnml.classifier import TNClassifier
from tnml.network import build_mps, build_ttn


def randomize(net, rng):
    """Same graph and bond dims, i.i.d. normal entries, no known center."""
    tensors = {n: rng.standard_normal(net.tensor(n).shape) for n in net.nodes}
    return net.replace(tensors, center=None)


def random_ttn(n_leaves, rng, chi=3, label_dim=2, leaf_dim=2):
    return randomize(build_ttn(n_leaves, leaf_dim, chi, label_dim), rng)


def random_mps(n_sites, rng, chi=3, label_dim=2, label_site=None, site_dim=2):
    return randomize(build_mps(n_sites, site_dim, chi, label_dim, label_site), rng)


def random_model(rng, topology="ttn", n_features=4, n_classes=3, chi=3, permutation=None):
    if topology == "ttn":
        net = random_ttn(n_features, rng, chi, n_classes)
    else:
        net = random_mps(n_features, rng, chi, n_classes)
    if permutation is None:
        permutation = tuple(rng.permutation(n_features))
    return TNClassifier(net, permutation, n_classes, (1, n_features))


def product_state(locals_):
    """Dense Phi(x) by repeated outer products, leaf order."""
    out = np.ones(())
    for v in locals_:
        out = np.multiply.outer(out, v)
    return out


def nested_loop_phi(locals_):
    """The same tensor filled entry by entry (independent of outer products)."""
    n, d = locals_.shape
    out = np.zeros((d,) * n)
    for idx in np.ndindex(*out.shape):
        val = 1.0
        for site, i in enumerate(idx):
            val *= locals_[site, i]
        out[idx] = val
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ------------------------------------------------ acceptance summary lines

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """``acceptance(n, ok, detail)`` records the verdict line for criterion ``n``."""

    def record(n, ok, detail):
        _ACCEPTANCE[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
