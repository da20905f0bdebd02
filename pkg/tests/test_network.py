import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_mps, random_ttn
from tnml.errors import ShapeError
from tnml.network import (
    TensorNetwork,
    build_mps,
    build_ttn,
    canonicalize,
    cut_rank_bound,
    full_contract,
    merge_link,
    mps_from_dense,
    network_norm,
    normalize,
    param_count,
    schmidt_spectrum,
    truncate_link,
    truncation_rank,
    ttn_from_dense,
)


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def _matricized(net, link_id):
    """Full tensor reshaped rows = open links on one side of ``link_id``."""
    full = full_contract(net)
    a, _ = net.link(link_id).endpoints
    side = net.side(link_id, a)
    rows = [i for i, lid in enumerate(net.open_links) if net.node_of(lid) in side]
    cols = [i for i in range(full.ndim) if i not in rows]
    m = np.transpose(full, rows + cols)
    return m.reshape(int(np.prod([full.shape[i] for i in rows])), -1)


def _assert_canonical(net, tol=1e-8):
    for node in net.nodes:
        if node == net.center:
            continue
        toward = net.path(node, net.center)[1]
        lid = next(l for l, o in net.neighbors(node) if o == toward)
        t = net.tensor(node)
        ax = net.node_links(node).index(lid)
        m = np.moveaxis(t, ax, -1).reshape(-1, t.shape[ax])
        np.testing.assert_allclose(m.T @ m, np.eye(m.shape[1]), atol=tol)


# ------------------------------------------------------------- builders


def test_mps_chi_one_is_product_state():
    net = build_mps(2, (2, 2), 1, 1)
    assert len(net.nodes) == 2 and len(net.internal_links) == 1
    assert net.link(net.internal_links[0]).dim == 1
    full = full_contract(net).reshape(2, 2)
    assert np.linalg.matrix_rank(full) == 1


def test_mps_bond_dims_follow_cut_rank_bound():
    net = build_mps(8, 2, 16, 8, label_site=7)
    dims = [net.link(9 + i).dim for i in range(7)]
    # hand enumeration: min(2^left, 2^right * 8)
    expected = [min(2 ** (i + 1), 2 ** (7 - i) * 8) for i in range(7)]
    assert dims == [min(16, e) for e in expected]


def test_mps_bond_profile_mid_label():
    net = build_mps(8, 2, 16, 1)
    assert [net.link(9 + i).dim for i in range(7)] == [2, 4, 8, 16, 8, 4, 2]


def test_mps_middle_node_arity():
    net = build_mps(3, 2, 4, 8, label_site=1)
    assert net.tensor(1).ndim == 4
    assert net.node_links(1) == (4, 1, 3, 5)


def test_mps_rejects_bad_label_site():
    with pytest.raises(ShapeError):
        build_mps(3, 2, 4, 8, label_site=3)


def test_ttn_eight_leaves():
    net = build_ttn(8, 2, 4, 8)
    assert len(net.nodes) == 7
    assert net.label_node == 0 and net.link(net.label_link).dim == 8
    bottom = [n for n in net.nodes if sum(l in net.feature_links for l in net.node_links(n)) == 2]
    assert len(bottom) == 4


def test_ttn_degenerate_two_leaves():
    net = build_ttn(2, 2, 4, 8)
    assert net.nodes == [0]
    assert net.tensor(0).shape == (2, 2, 8)
    assert param_count(net) == 32


def test_ttn_large_node_and_parameter_count():
    chi = 4
    net = build_ttn(1024, 2, chi, 8)
    assert len(net.nodes) == 1023
    # closed form: bottom layer 512 nodes of 2*2*min(chi, 4); every layer above
    # is min(chi, bound)^3, the root carries the label
    expected = 512 * 2 * 2 * 4 + (511 - 1) * chi**3 + chi * chi * 8
    assert param_count(net) == expected
    assert param_count(net) == sum(net.tensor(n).size for n in net.nodes)


@pytest.mark.parametrize("n", [0, 1, 3, 6])
def test_ttn_rejects_non_power_of_two(n):
    with pytest.raises(ShapeError):
        build_ttn(n, 2, 2, 2)


def test_built_networks_are_canonical_and_unit_norm():
    for net in (build_ttn(16, 2, 4, 3, init_seed=1), build_mps(6, 2, 4, 3, init_seed=1)):
        _assert_canonical(net)
        assert abs(np.linalg.norm(full_contract(net)) - 1.0) < 1e-10


def test_param_count_mps_example():
    net = build_mps(4, 2, 1, 8, label_site=0)
    assert param_count(net) == 2 * 8 + 2 + 2 + 2


def test_cut_rank_bound_against_enumeration():
    net = build_ttn(8, 2, 64, 3)
    axes = {n: net.node_links(n) for n in net.nodes}
    dims = {l: net.link(l).dim for l in net.open_links}
    bounds = cut_rank_bound(axes, dims)
    for lid in net.internal_links:
        a, _ = net.link(lid).endpoints
        side = net.side(lid, a)
        inside = int(np.prod([dims[l] for l in net.open_links if net.node_of(l) in side]))
        outside = int(np.prod([dims[l] for l in net.open_links if net.node_of(l) not in side]))
        assert bounds[lid] == min(inside, outside)


# ---------------------------------------------------------- graph checks


def test_network_rejects_cycle():
    t = np.ones((2, 2))
    with pytest.raises(ShapeError):
        TensorNetwork({0: t, 1: t}, {0: (5, 6), 1: (5, 6)}, [])


def test_network_rejects_dim_mismatch():
    with pytest.raises(ShapeError):
        TensorNetwork({0: np.ones((2, 3)), 1: np.ones((4, 2))}, {0: (0, 5), 1: (5, 1)}, [0, 1])


def test_network_rejects_disconnected():
    with pytest.raises(ShapeError):
        TensorNetwork({0: np.ones(2), 1: np.ones(2)}, {0: (0,), 1: (1,)}, [0, 1])


def test_tensors_are_read_only(rng):
    net = random_ttn(4, rng)
    with pytest.raises(ValueError):
        net.tensor(0)[...] = 0.0


# ------------------------------------------------------------ canonicalize


def test_canonicalize_idempotent(rng):
    net = canonicalize(random_ttn(8, rng), 2)
    again = canonicalize(net, 2)
    np.testing.assert_allclose(full_contract(again), full_contract(net), atol=1e-14)


def test_canonicalize_preserves_full_tensor(rng):
    net = random_ttn(4, rng)
    for c in net.nodes:
        out = canonicalize(net, c)
        assert _rel(full_contract(out), full_contract(net)) < 1e-10
        _assert_canonical(out)


def test_center_holds_the_norm(rng):
    net = random_ttn(8, rng)
    out = canonicalize(net, 4)
    assert abs(np.linalg.norm(out.tensor(4)) - np.linalg.norm(full_contract(net))) < 1e-10 * np.linalg.norm(full_contract(net))


def test_canonicalize_unknown_node(rng):
    with pytest.raises(KeyError):
        canonicalize(random_ttn(4, rng), 99)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), kind=st.sampled_from(["ttn", "mps"]), data=st.data())
def test_gauge_invariance_property(seed, kind, data):
    r = np.random.default_rng(seed)
    net = random_ttn(8, r, chi=3) if kind == "ttn" else random_mps(7, r, chi=3)
    ref = full_contract(net)
    centers = data.draw(st.lists(st.sampled_from(net.nodes), min_size=1, max_size=4))
    for c in centers:
        net = canonicalize(net, c)
        assert _rel(full_contract(net), ref) < 1e-10
    _assert_canonical(net)


def test_normalize_and_norm(rng):
    net = random_mps(5, rng)
    assert abs(network_norm(net) - np.linalg.norm(full_contract(net))) < 1e-10 * network_norm(net)
    assert abs(np.linalg.norm(full_contract(normalize(net))) - 1.0) < 1e-12


def test_normalize_zero_network():
    net = build_ttn(2, 2, 2, 2)
    with pytest.raises(ShapeError):
        normalize(net.replace({0: np.zeros((2, 2, 2))}))


# ---------------------------------------------------------------- spectra


def test_product_network_single_coefficient():
    net = build_ttn(4, 2, 1, 2).scaled(3.0)
    for lid in net.internal_links:
        spec = schmidt_spectrum(net, lid)
        assert spec.rank == 1
        np.testing.assert_allclose(spec.coefficients[0], 3.0, rtol=1e-12)


def test_maximally_entangled_pair():
    # two sites holding (e0 e0 + e1 e1)/sqrt 2, label of dim 1 on site 0
    a = np.eye(2).reshape(2, 1, 2) / 2**0.25
    b = np.eye(2) / 2**0.25
    net = TensorNetwork({0: a, 1: b}, {0: (0, 2, 3), 1: (3, 1)}, [0, 1, 2])
    spec = schmidt_spectrum(net, 3)
    np.testing.assert_allclose(spec.coefficients, [2**-0.5, 2**-0.5], atol=1e-14)


def test_spectrum_matches_matricized_svd(rng):
    net = random_ttn(8, rng, chi=4)
    for lid in net.internal_links:
        s = schmidt_spectrum(net, lid).coefficients
        oracle = np.linalg.svd(_matricized(net, lid), compute_uv=False)
        k = min(s.size, oracle.size)
        np.testing.assert_allclose(s[:k], oracle[:k], atol=1e-8 * oracle[0])
        assert np.all(s[k:] < 1e-8 * oracle[0]) and np.all(oracle[k:] < 1e-8 * oracle[0])


def test_spectrum_rejects_open_link(rng):
    with pytest.raises(ShapeError):
        schmidt_spectrum(random_ttn(4, rng), 0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_unit_norm_spectra_sum_to_one(seed):
    net = normalize(random_ttn(8, np.random.default_rng(seed), chi=3))
    for lid in net.internal_links:
        spec = schmidt_spectrum(net, lid)
        assert abs(spec.weights.sum() - 1.0) < 1e-8
        assert np.all(np.diff(spec.coefficients) <= 1e-15)


# ------------------------------------------------------------- truncation


def _two_coefficient_net(alphas):
    a = np.diag(alphas).reshape(2, 1, 2)
    b = np.eye(2)
    return TensorNetwork({0: a, 1: b}, {0: (0, 2, 3), 1: (3, 1)}, [0, 1, 2])


def test_truncation_rule_keeps_both_below_budget():
    net = _two_coefficient_net([0.8, 0.6])
    out = truncate_link(net, 3, 0.3)
    assert out.link(3).dim == 2


def test_truncation_rule_discards_at_budget():
    net = _two_coefficient_net([0.8, 0.6])
    out, lost = truncate_link(net, 3, 0.36, return_discarded=True)
    assert out.link(3).dim == 1
    assert abs(lost - 0.36) < 1e-12
    err = np.linalg.norm(full_contract(out) - full_contract(net)) ** 2
    assert abs(err - 0.36) < 1e-10


def test_truncation_rank_enumeration():
    # brute force over every k: largest k with tail <= eps
    r = np.random.default_rng(3)
    for _ in range(200):
        s = np.sort(r.random(r.integers(1, 7)))[::-1]
        s /= np.linalg.norm(s)
        eps = float(r.random() * 0.5)
        best = 0
        for k in range(len(s)):
            if np.sum(s[len(s) - k:] ** 2) <= eps:
                best = k
        assert truncation_rank(s, eps) == len(s) - best


def test_truncation_rank_max_dim_and_errors():
    assert truncation_rank([0.9, 0.3, 0.1], 0.0, max_dim=2) == 2
    assert truncation_rank([1.0, 0.0, 0.0], 0.0) == 1
    with pytest.raises(ValueError):
        truncation_rank([1.0], -1e-3)


def test_truncate_trailing_zeros_is_lossless():
    # bond of dim 4 carrying a rank-2 bipartition
    rng = np.random.default_rng(1)
    a = rng.standard_normal((2, 2)) @ np.eye(2, 4)
    b = rng.standard_normal((4, 3))
    b[2:] = 0.0
    net = normalize(TensorNetwork({0: a.reshape(2, 1, 4), 1: b}, {0: (0, 2, 3), 1: (3, 1)}, [0, 1, 2]))
    out = truncate_link(net, 3, 0.0)
    assert out.link(3).dim == 2
    assert _rel(full_contract(out), full_contract(net)) < 1e-10


def test_truncate_rejects_open_link_and_negative_eps(rng):
    net = normalize(random_ttn(4, rng))
    with pytest.raises(ShapeError):
        truncate_link(net, 0, 0.1)
    with pytest.raises(ValueError):
        truncate_link(net, net.internal_links[0], -0.1)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), eps=st.sampled_from([1e-6, 1e-4, 1e-2, 0.1]))
def test_truncation_error_law(seed, eps):
    r = np.random.default_rng(seed)
    net = normalize(random_ttn(8, r, chi=4))
    lid = r.choice(net.internal_links)
    out, lost = truncate_link(net, int(lid), eps, return_discarded=True)
    err = np.linalg.norm(full_contract(out) - full_contract(net)) ** 2
    assert abs(err - lost) < 1e-10
    assert lost <= eps
    assert param_count(out) <= param_count(net)


def test_lossless_truncation_is_idempotent(rng):
    net = normalize(random_ttn(8, rng, chi=8))
    once = net
    for lid in net.internal_links:
        once = truncate_link(once, lid, 0.0)
    twice = once
    for lid in net.internal_links:
        twice = truncate_link(twice, lid, 0.0)
    assert once.bond_dims() == twice.bond_dims()
    assert _rel(full_contract(once), full_contract(net)) < 1e-10
    assert _rel(full_contract(twice), full_contract(net)) < 1e-10


def test_param_count_drops_after_truncation(rng):
    net = normalize(random_ttn(8, rng, chi=4))
    lid = net.internal_links[0]
    out = truncate_link(net, lid, 0.0, max_dim=1)
    assert param_count(out) < param_count(net)


# ------------------------------------------------------------ contraction


def test_full_contract_single_node(rng):
    t = rng.standard_normal((2, 2, 3))
    net = TensorNetwork({0: t}, {0: (0, 1, 2)}, [0, 1, 2])
    np.testing.assert_array_equal(full_contract(net), t)


def test_full_contract_rank_one_chain(rng):
    a = rng.standard_normal((2, 1))
    b = rng.standard_normal((1, 3))
    net = TensorNetwork({0: a, 1: b}, {0: (0, 5), 1: (5, 1)}, [0, 1])
    np.testing.assert_allclose(full_contract(net), np.outer(a[:, 0], b[0]), atol=1e-14)


def test_full_contract_nested_loops(rng):
    a = rng.standard_normal((2, 3))
    b = rng.standard_normal((3, 2, 4))
    c = rng.standard_normal((4, 2))
    net = TensorNetwork({0: a, 1: b, 2: c}, {0: (0, 10), 1: (10, 1, 11), 2: (11, 2)}, [0, 1, 2])
    expected = np.zeros((2, 2, 2))
    for i, j, k in itertools.product(range(2), range(2), range(2)):
        for x in range(3):
            for y in range(4):
                expected[i, j, k] += a[i, x] * b[x, j, y] * c[y, k]
    np.testing.assert_allclose(full_contract(net), expected, atol=1e-12)


def test_full_contract_cap():
    net = build_ttn(32, 2, 2, 2)
    with pytest.raises(ShapeError):
        full_contract(net, cap=1000)


def test_merge_link_preserves_tensor(rng):
    net = random_ttn(8, rng)
    merged = merge_link(net, net.internal_links[0])
    assert len(merged.nodes) == len(net.nodes) - 1
    assert _rel(full_contract(merged), full_contract(net)) < 1e-12


# ------------------------------------------------------- dense round trips


@pytest.mark.parametrize("n", [2, 4, 8])
def test_mps_and_ttn_from_same_dense_tensor(n, rng):
    full = rng.standard_normal((2,) * n + (3,))
    mps = mps_from_dense(full)
    ttn = ttn_from_dense(full)
    assert _rel(full_contract(mps), full) < 1e-10
    assert _rel(full_contract(ttn), full) < 1e-10
    np.testing.assert_allclose(full_contract(mps), full_contract(ttn), atol=1e-10 * np.linalg.norm(full))
    axes = {k: mps.node_links(k) for k in mps.nodes}
    bounds = cut_rank_bound(axes, {l: mps.link(l).dim for l in mps.open_links})
    assert all(mps.link(l).dim == bounds[l] for l in mps.internal_links)
