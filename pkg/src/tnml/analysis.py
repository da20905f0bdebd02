"""Entanglement diagnostics and Schmidt-truncation compression of trained models.

Feature entropies are properties of the weight network alone: no data is
involved. The entropy of pixel ``k`` is the von Neumann entropy (in nats) of
the bipartition separating that pixel's open link from everything else.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifier import TNClassifier, evaluate
from .encoding import Dataset
from .network import canonicalize, normalize, param_count, truncate_link
from .tensor_core import svd_split

__all__ = [
    "EntropyMap",
    "CompressionReport",
    "entropy_from_coefficients",
    "feature_entropy",
    "feature_entropies",
    "entropy_map",
    "compress",
    "compression_sweep",
    "compression_order",
]

ZERO_WEIGHT = 1e-15


@dataclass(frozen=True)
class EntropyMap:
    values: np.ndarray  # (H, W), nats
    model_ref: str = ""

    def top(self, n: int = 1) -> list[tuple[int, int, float]]:
        """The ``n`` highest-entropy pixels as ``(row, col, value)``, largest first."""
        flat = self.values.ravel()
        order = np.argsort(-flat, kind="stable")[:n]
        w = self.values.shape[1]
        return [(int(i // w), int(i % w), float(flat[i])) for i in order]


@dataclass
class CompressionReport:
    eps: float
    params_before: int
    params_after: int
    accuracy_before: float | None = None
    accuracy_after: float | None = None
    discarded: dict = field(default_factory=dict)  # link id -> discarded squared weight

    @property
    def ratio(self) -> float:
        return self.params_after / self.params_before

    @property
    def n_links(self) -> int:
        return len(self.discarded)

    @property
    def distortion_bound(self) -> float:
        """Squared Frobenius distortion allowed by an ``eps`` budget on every link."""
        return self.n_links * self.eps

    @property
    def total_discarded(self) -> float:
        return float(sum(self.discarded.values()))

    def as_row(self) -> dict:
        return {
            "eps": self.eps,
            "params_before": self.params_before,
            "params_after": self.params_after,
            "ratio": self.ratio,
            "accuracy_before": self.accuracy_before,
            "accuracy_after": self.accuracy_after,
            "discarded_total": self.total_discarded,
            "distortion_bound": self.distortion_bound,
        }


def entropy_from_coefficients(coefficients) -> float:
    """``-sum a^2 log a^2`` over coefficients normalized to unit total weight."""
    w = np.asarray(coefficients, dtype=np.float64) ** 2
    total = w.sum()
    if total <= 0:
        return 0.0
    w = w / total
    w = w[w >= ZERO_WEIGHT]
    if w.size <= 1:
        return 0.0
    return max(0.0, float(-np.sum(w * np.log(w))))


def _leaf_of_pixel(model: TNClassifier) -> np.ndarray:
    inv = np.empty(len(model.permutation), dtype=np.int64)
    inv[np.asarray(model.permutation)] = np.arange(len(model.permutation))
    return inv


def _node_spectrum(net, node, lid):
    t = net.tensor(node)
    ax = net.node_links(node).index(lid)
    _, s, _ = svd_split(t, [ax])
    return s


def feature_entropy(model: TNClassifier, k: int) -> float:
    """Entropy of pixel ``k`` against all other pixels plus the label."""
    if not 0 <= k < model.n_features:
        raise IndexError(f"feature {k} out of range for {model.n_features} features")
    net = model.net
    lid = net.feature_links[int(_leaf_of_pixel(model)[k])]
    node = net.node_of(lid)
    net = canonicalize(normalize(net), node)
    return entropy_from_coefficients(_node_spectrum(net, node, lid))


def feature_entropies(model: TNClassifier) -> np.ndarray:
    """Entropies of all pixels, indexed by pixel.

    The orthogonality center walks from one feature-carrying node to the
    next, so each gauge move only touches a short path.
    """
    net = normalize(model.net)
    by_node: dict[int, list[int]] = {}
    for pos, lid in enumerate(net.feature_links):
        by_node.setdefault(net.node_of(lid), []).append(pos)
    # depth-first order keeps consecutive nodes close to each other
    visit = _dfs_order(net, by_node)
    out = np.zeros(model.n_features)
    perm = np.asarray(model.permutation)
    for node in visit:
        net = canonicalize(net, node)
        for pos in by_node[node]:
            s = _node_spectrum(net, node, net.feature_links[pos])
            out[perm[pos]] = entropy_from_coefficients(s)
    return out


def _dfs_order(net, wanted):
    wanted = set(wanted)
    order, stack, seen = [], [net.label_node], set()
    while stack:
        node = stack.pop()
        if node in seen:
            continue
        seen.add(node)
        if node in wanted:
            order.append(node)
        stack.extend(sorted((o for _, o in net.neighbors(node) if o not in seen), reverse=True))
    return order


def entropy_map(model: TNClassifier, model_ref: str = "") -> EntropyMap:
    """Feature entropies laid out on the image grid."""
    h, w = model.image_shape
    values = feature_entropies(model).reshape(h, w)
    values.setflags(write=False)
    return EntropyMap(values, model_ref)


def compression_order(net) -> list[int]:
    """Internal links ordered from the label node outward."""
    parent = net.parents(net.label_node)
    return [parent[n][0] for n in net.bfs_order(net.label_node) if parent[n] is not None]


def compress(model: TNClassifier, eps: float, test_ds: Dataset | None = None, order=None):
    """Truncate every internal link once with a squared-weight budget ``eps``.

    Links are visited from the label node outward (or in ``order``). Each
    truncation re-gauges the network first, so every discarded weight is an
    exact Schmidt weight of the current network. Returns the compressed
    model and a report.
    """
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    net = normalize(model.net)
    before = param_count(net)
    discarded = {}
    for lid in (compression_order(net) if order is None else order):
        net, lost = truncate_link(net, lid, eps, return_discarded=True)
        discarded[int(lid)] = lost
    out = model.with_net(net)
    report = CompressionReport(float(eps), before, param_count(net), discarded=discarded)
    if test_ds is not None:
        report.accuracy_before = evaluate(model, test_ds)[0]
        report.accuracy_after = evaluate(out, test_ds)[0]
    return out, report


def compression_sweep(model: TNClassifier, eps_list, test_ds: Dataset | None = None) -> list[CompressionReport]:
    """Compress the original ``model`` once per threshold."""
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise ValueError("eps_list is empty")
    if any(b < a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be sorted increasingly")
    base_acc = evaluate(model, test_ds)[0] if test_ds is not None else None
    reports = []
    for eps in eps_list:
        compressed, rep = compress(model, eps)
        if test_ds is not None:
            rep.accuracy_before = base_acc
            rep.accuracy_after = evaluate(compressed, test_ds)[0]
        reports.append(rep)
    return reports
