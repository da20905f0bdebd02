"""Loop-free tensor networks: MPS chains and binary trees.

A network is a set of node tensors whose axes are labelled by link ids. A link
shared by two nodes is contracted; a link touching one node is open. Open
links are ordered: the feature links (one per leaf position) followed by the
single label link.

Networks are immutable. Every operation returns a new network and shares the
(read-only) arrays of untouched nodes with its input.

Link id layout, for ``n`` features:

* ``0 .. n-1`` -- open feature links, one per leaf position
* ``n`` -- the open label link
* ``n+1 ..`` -- internal links (for a tree, ``n + j`` is the link above node
  ``j``; for a chain, ``n + 1 + i`` joins sites ``i`` and ``i + 1``)
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import ShapeError
from .tensor_core import as_tensor, frobenius_norm, qr_split, svd_split

__all__ = [
    "Link",
    "SchmidtSpectrum",
    "TensorNetwork",
    "build_mps",
    "build_ttn",
    "canonicalize",
    "schmidt_spectrum",
    "truncate_link",
    "truncation_rank",
    "full_contract",
    "param_count",
    "normalize",
    "network_norm",
    "merge_link",
    "mps_from_dense",
    "ttn_from_dense",
    "cut_rank_bound",
    "FULL_CONTRACT_CAP",
]

FULL_CONTRACT_CAP = 2**22

# squared Schmidt weights below this fraction of the total count as zeros
_ZERO_WEIGHT = 1e-24


@dataclass(frozen=True)
class Link:
    id: int
    endpoints: tuple  # (node, node) or (node, None) for an open link
    dim: int

    @property
    def is_open(self) -> bool:
        return self.endpoints[1] is None


@dataclass(frozen=True)
class SchmidtSpectrum:
    link_id: int
    coefficients: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        """Squared coefficients."""
        return self.coefficients**2

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.coefficients))


class TensorNetwork:
    """Immutable loop-free tensor network.

    Parameters
    ----------
    tensors : mapping node id -> array
    axes : mapping node id -> sequence of link ids, one per tensor axis
    open_links : ordered open link ids (features, then the label link)
    center : node id of the orthogonality center, or None if unknown
    topology : ``"mps"``, ``"ttn"`` or ``"tree"`` (generic)
    """

    def __init__(
        self,
        tensors: Mapping[int, np.ndarray],
        axes: Mapping[int, Iterable[int]],
        open_links: Iterable[int],
        center: int | None = None,
        topology: str = "tree",
        _validate: bool = True,
    ):
        self._tensors = {}
        for node, t in tensors.items():
            arr = t
            if not (isinstance(t, np.ndarray) and t.dtype == np.float64 and not t.flags.writeable):
                arr = as_tensor(t).copy()
                arr.setflags(write=False)
            self._tensors[int(node)] = arr
        self._axes = {int(node): tuple(int(l) for l in ax) for node, ax in axes.items()}
        self._open = tuple(int(l) for l in open_links)
        self.center = None if center is None else int(center)
        self.topology = topology
        self._links = self._collect_links()
        if _validate:
            self.validate()

    # ------------------------------------------------------------------ graph

    def _collect_links(self):
        seen: dict[int, list] = {}
        for node in sorted(self._axes):
            t = self._tensors[node]
            ax = self._axes[node]
            if t.ndim != len(ax):
                raise ShapeError(f"node {node}: tensor rank {t.ndim} != {len(ax)} links")
            for k, lid in enumerate(ax):
                seen.setdefault(lid, []).append((node, t.shape[k]))
        links = {}
        for lid, ends in seen.items():
            if len(ends) > 2:
                raise ShapeError(f"link {lid} is shared by {len(ends)} nodes")
            if len(ends) == 2:
                (n0, d0), (n1, d1) = ends
                if n0 == n1:
                    raise ShapeError(f"link {lid} is a self-loop on node {n0}")
                if d0 != d1:
                    raise ShapeError(f"link {lid} has mismatched dims {d0} and {d1}")
                links[lid] = Link(lid, (n0, n1), d0)
            else:
                links[lid] = Link(lid, (ends[0][0], None), ends[0][1])
        return links

    def validate(self) -> None:
        """Raise ShapeError unless the graph is a connected tree."""
        if not self._tensors:
            raise ShapeError("network has no nodes")
        if set(self._tensors) != set(self._axes):
            raise ShapeError("tensor and axis tables name different nodes")
        open_ids = {l.id for l in self._links.values() if l.is_open}
        if set(self._open) != open_ids or len(self._open) != len(open_ids):
            raise ShapeError("open_links does not list exactly the open links")
        internal = [l for l in self._links.values() if not l.is_open]
        if len(internal) != len(self._tensors) - 1:
            raise ShapeError("graph is not a tree (edge count != nodes - 1)")
        start = next(iter(self._tensors))
        reached = {start}
        queue = deque([start])
        while queue:
            node = queue.popleft()
            for _, other in self.neighbors(node):
                if other not in reached:
                    reached.add(other)
                    queue.append(other)
        if len(reached) != len(self._tensors):
            raise ShapeError("graph is not connected")
        if self.center is not None and self.center not in self._tensors:
            raise ShapeError(f"center {self.center} is not a node")

    @property
    def nodes(self) -> list[int]:
        return sorted(self._tensors)

    @property
    def links(self) -> dict[int, Link]:
        return dict(self._links)

    @property
    def open_links(self) -> tuple[int, ...]:
        return self._open

    @property
    def feature_links(self) -> tuple[int, ...]:
        return self._open[:-1]

    @property
    def label_link(self) -> int:
        return self._open[-1]

    @property
    def n_features(self) -> int:
        return len(self._open) - 1

    @property
    def internal_links(self) -> list[int]:
        return sorted(l.id for l in self._links.values() if not l.is_open)

    def link(self, link_id: int) -> Link:
        try:
            return self._links[link_id]
        except KeyError:
            raise KeyError(f"unknown link {link_id}") from None

    def tensor(self, node: int) -> np.ndarray:
        return self._tensors[node]

    def node_links(self, node: int) -> tuple[int, ...]:
        return self._axes[node]

    def node_of(self, link_id: int) -> int:
        """The node holding an open link."""
        return self.link(link_id).endpoints[0]

    @property
    def label_node(self) -> int:
        return self.node_of(self.label_link)

    def neighbors(self, node: int) -> list[tuple[int, int]]:
        """(link id, neighbor node) pairs for ``node``, in axis order."""
        out = []
        for lid in self._axes[node]:
            a, b = self._links[lid].endpoints
            if b is None:
                continue
            out.append((lid, b if a == node else a))
        return out

    def path(self, start: int, stop: int) -> list[int]:
        """Node sequence from ``start`` to ``stop`` inclusive."""
        parent = self.parents(stop)
        out = [start]
        while out[-1] != stop:
            out.append(parent[out[-1]][1])
        return out

    def parents(self, root: int) -> dict[int, tuple[int, int] | None]:
        """Map node -> (link to parent, parent) when the tree hangs from ``root``."""
        if root not in self._tensors:
            raise KeyError(f"unknown node {root}")
        parent: dict[int, tuple[int, int] | None] = {root: None}
        queue = deque([root])
        while queue:
            node = queue.popleft()
            for lid, other in self.neighbors(node):
                if other not in parent:
                    parent[other] = (lid, node)
                    queue.append(other)
        return parent

    def bfs_order(self, root: int) -> list[int]:
        order = [root]
        seen = {root}
        i = 0
        while i < len(order):
            for _, other in self.neighbors(order[i]):
                if other not in seen:
                    seen.add(other)
                    order.append(other)
            i += 1
        return order

    def side(self, link_id: int, node: int) -> set[int]:
        """Nodes reachable from ``node`` without crossing ``link_id``."""
        out = {node}
        stack = [node]
        while stack:
            cur = stack.pop()
            for lid, other in self.neighbors(cur):
                if lid != link_id and other not in out:
                    out.add(other)
                    stack.append(other)
        return out

    def bond_dims(self) -> dict[int, int]:
        return {lid: self._links[lid].dim for lid in self.internal_links}

    # --------------------------------------------------------------- updates

    def replace(self, tensors: Mapping[int, np.ndarray] | None = None, center="keep") -> "TensorNetwork":
        """Copy with some node tensors swapped (shapes may change)."""
        new = dict(self._tensors)
        if tensors:
            new.update(tensors)
        c = self.center if center == "keep" else center
        return TensorNetwork(new, self._axes, self._open, c, self.topology, _validate=False)

    def scaled(self, factor: float) -> "TensorNetwork":
        """Multiply the represented tensor by ``factor`` (applied at one node)."""
        node = self.center if self.center is not None else self.nodes[0]
        return self.replace({node: self._tensors[node] * factor})

    def __repr__(self):
        return (
            f"TensorNetwork(topology={self.topology!r}, nodes={len(self._tensors)}, "
            f"features={self.n_features}, center={self.center})"
        )


# ---------------------------------------------------------------- layouts


def _mps_axes(n: int, label_site: int) -> dict[int, tuple[int, ...]]:
    axes = {}
    for i in range(n):
        ax = []
        if i > 0:
            ax.append(n + i)
        ax.append(i)
        if i == label_site:
            ax.append(n)
        if i < n - 1:
            ax.append(n + 1 + i)
        axes[i] = tuple(ax)
    return axes


def _ttn_axes(n: int) -> dict[int, tuple[int, ...]]:
    axes = {}
    first_bottom = n // 2 - 1
    for j in range(n - 1):
        if j >= first_bottom:
            q = j - first_bottom
            axes[j] = (2 * q, 2 * q + 1, n + j)
        else:
            axes[j] = (n + 2 * j + 1, n + 2 * j + 2, n + j)
    return axes


def _adjacency(axes: Mapping[int, tuple]) -> dict[int, list[tuple[int, int]]]:
    owners: dict[int, list[int]] = {}
    for node, ax in axes.items():
        for lid in ax:
            owners.setdefault(lid, []).append(node)
    adj: dict[int, list[tuple[int, int]]] = {node: [] for node in axes}
    for node, ax in axes.items():
        for lid in ax:
            ends = owners[lid]
            if len(ends) == 2:
                adj[node].append((lid, ends[1] if ends[0] == node else ends[0]))
    return adj


def _hang(adj, root):
    """BFS order and parent map (node -> (link, parent)) of a tree layout."""
    parent = {root: None}
    order = [root]
    i = 0
    while i < len(order):
        for lid, other in adj[order[i]]:
            if other not in parent:
                parent[other] = (lid, order[i])
                order.append(other)
        i += 1
    return order, parent


def cut_rank_bound(axes: Mapping[int, tuple], open_dims: Mapping[int, int]) -> dict[int, int]:
    """Largest possible rank across each internal link of a tree layout.

    ``open_dims`` maps every open link id to its dimension.
    """
    adj = _adjacency(axes)
    root = next(iter(axes))
    order, parent = _hang(adj, root)
    total = 1
    for d in open_dims.values():
        total *= int(d)
    below = {}
    for node in reversed(order):
        size = 1
        for lid in axes[node]:
            if lid in open_dims:
                size *= int(open_dims[lid])
        for lid, other in adj[node]:
            if parent.get(other) == (lid, node):
                size *= below[other]
        below[node] = size
    return {parent[n][0]: min(below[n], total // below[n]) for n in order if parent[n] is not None}


def _isometric_init(axes, dims, root, label_link, rng, noise):
    """Perturbed identity isometries toward ``root`` plus a unit-norm root tensor.

    Bond dims are first clamped so no node maps to more directions than its
    other axes span.
    """
    order, parent = _hang(_adjacency(axes), root)
    for node in reversed(order):
        if parent[node] is None:
            continue
        up = parent[node][0]
        dims[up] = min(dims[up], int(np.prod([dims[l] for l in axes[node] if l != up])))
    tensors = {}
    internal = [parent[n][0] for n in order if parent[n] is not None]
    features = {l for n, ax in axes.items() for l in ax if l != label_link and l not in internal}
    if all(dims[l] == 1 for l in internal):
        # product state: every node is an outer product of unit vectors
        for node, ax in axes.items():
            t = np.ones(())
            for l in ax:
                vec = _uniform_basis(dims[l])[:, 0] + noise * rng.standard_normal(dims[l])
                if l == label_link:
                    vec = np.linspace(1.0, 0.5, dims[l]) + noise * rng.standard_normal(dims[l])
                t = np.multiply.outer(t, vec / np.linalg.norm(vec))
            tensors[node] = t
        return tensors
    for node, ax in axes.items():
        if parent[node] is None:
            k = ax.index(label_link)
            shape = [dims[l] for l in ax if l != label_link] + [dims[label_link]]
            m = noise * rng.standard_normal((int(np.prod(shape[:-1])), shape[-1]))
            # a distinct dominant entry per label keeps initial scores apart
            for c in range(m.shape[1]):
                m[c % m.shape[0], c] += 1.0
            t = np.moveaxis(m.reshape(shape), -1, k)
            tensors[node] = t / np.linalg.norm(t)
            continue
        up = parent[node][0]
        other_shape = [dims[l] for l in ax if l != up]
        rows, cols = int(np.prod(other_shape)), dims[up]
        q, r = np.linalg.qr(np.eye(rows, cols) + noise * rng.standard_normal((rows, cols)))
        q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
        t = np.moveaxis(q.reshape(other_shape + [cols]), -1, ax.index(up))
        # feature axes start aligned with the uniform direction, so every
        # spin-map vector has overlap at least cos(pi/4) with the leading state
        for k, l in enumerate(ax):
            if l in features:
                t = np.moveaxis(np.tensordot(_uniform_basis(dims[l]), t, axes=([1], [k])), 0, k)
        tensors[node] = t
    return tensors


def _uniform_basis(d):
    """Orthogonal ``d x d`` matrix whose first column is ``(1, ..., 1) / sqrt(d)``."""
    m = np.eye(d)
    m[:, 0] = 1.0
    q, r = np.linalg.qr(m)
    return q * np.sign(np.diag(r))


def build_mps(
    n_sites: int,
    site_dims,
    bond_dim: int,
    label_dim: int,
    label_site: int | None = None,
    init_seed: int = 0,
    init_noise: float = 1e-2,
) -> TensorNetwork:
    """Open-boundary MPS over ``n_sites`` features with one label link.

    Bond dimensions are ``min(bond_dim, cut-rank bound)``. Tensors start as
    slightly perturbed identity isometries pointing at ``label_site``, which is
    the orthogonality center; the network has unit norm.
    """
    n_sites = int(n_sites)
    if n_sites < 2:
        raise ShapeError("an MPS needs at least 2 sites")
    if bond_dim < 1 or label_dim < 1:
        raise ShapeError("bond_dim and label_dim must be positive")
    if np.isscalar(site_dims):
        site_dims = [int(site_dims)] * n_sites
    site_dims = [int(d) for d in site_dims]
    if len(site_dims) != n_sites:
        raise ShapeError(f"{len(site_dims)} site dims for {n_sites} sites")
    if label_site is None:
        label_site = n_sites // 2
    if not 0 <= label_site < n_sites:
        raise ShapeError(f"label_site {label_site} out of range for {n_sites} sites")
    axes = _mps_axes(n_sites, label_site)
    open_dims = {i: site_dims[i] for i in range(n_sites)}
    open_dims[n_sites] = int(label_dim)
    dims = dict(open_dims)
    for lid, bound in cut_rank_bound(axes, open_dims).items():
        dims[lid] = min(int(bond_dim), bound)
    rng = np.random.default_rng(init_seed)
    tensors = _isometric_init(axes, dims, label_site, n_sites, rng, init_noise)
    open_links = list(range(n_sites)) + [n_sites]
    return TensorNetwork(tensors, axes, open_links, center=label_site, topology="mps")


def build_ttn(
    n_leaves: int,
    leaf_dim: int,
    bond_dim: int,
    label_dim: int,
    init_seed: int = 0,
    init_noise: float = 1e-2,
) -> TensorNetwork:
    """Perfect binary tree whose bottom nodes each hold two feature links.

    Node ``0`` is the root and carries the label link; node ``j`` has children
    ``2j+1`` and ``2j+2``. The root is the orthogonality center and the
    network has unit norm.
    """
    n = int(n_leaves)
    if n < 2 or n & (n - 1):
        raise ShapeError(f"n_leaves must be a power of two >= 2, got {n_leaves}")
    if bond_dim < 1 or label_dim < 1 or leaf_dim < 1:
        raise ShapeError("dimensions must be positive")
    axes = _ttn_axes(n)
    open_dims = {i: int(leaf_dim) for i in range(n)}
    open_dims[n] = int(label_dim)
    dims = dict(open_dims)
    for lid, bound in cut_rank_bound(axes, open_dims).items():
        dims[lid] = min(int(bond_dim), bound)
    rng = np.random.default_rng(init_seed)
    tensors = _isometric_init(axes, dims, 0, n, rng, init_noise)
    return TensorNetwork(tensors, axes, list(range(n + 1)), center=0, topology="ttn")


# ---------------------------------------------------------- gauge moves


def _qr_toward(tensors, net, node, link, target):
    """Make ``node`` isometric toward ``target`` across ``link``; push R onward."""
    ax_node = net.node_links(node).index(link)
    ax_target = net.node_links(target).index(link)
    t = tensors[node]
    left = [k for k in range(t.ndim) if k != ax_node]
    q, r = qr_split(t, left)
    tensors[node] = np.moveaxis(q, -1, ax_node)
    tgt = np.tensordot(r, tensors[target], axes=([1], [ax_target]))
    tensors[target] = np.moveaxis(tgt, 0, ax_target)


def canonicalize(net: TensorNetwork, new_center: int) -> TensorNetwork:
    """Gauge ``net`` so every node except ``new_center`` is isometric toward it.

    Only the path from the current center is touched when one is recorded;
    otherwise every node is orthogonalized, leaves first.
    """
    if new_center not in net.nodes:
        raise KeyError(f"unknown node {new_center}")
    tensors = {n: net.tensor(n) for n in net.nodes}
    if net.center is not None:
        if net.center == new_center:
            return net
        route = net.path(net.center, new_center)
        for a, b in zip(route, route[1:]):
            link = next(l for l, o in net.neighbors(a) if o == b)
            _qr_toward(tensors, net, a, link, b)
    else:
        parent = net.parents(new_center)
        for node in reversed(net.bfs_order(new_center)):
            if parent[node] is not None:
                link, up = parent[node]
                _qr_toward(tensors, net, node, link, up)
    return net.replace(tensors, center=new_center)


def network_norm(net: TensorNetwork) -> float:
    """Frobenius norm of the represented tensor."""
    if net.center is None:
        net = canonicalize(net, net.label_node)
    return frobenius_norm(net.tensor(net.center))


def normalize(net: TensorNetwork) -> TensorNetwork:
    """Rescale to unit Frobenius norm (canonicalizing if no center is known)."""
    if net.center is None:
        net = canonicalize(net, net.label_node)
    norm = frobenius_norm(net.tensor(net.center))
    if norm == 0.0:
        raise ShapeError("cannot normalize a zero network")
    return net.scaled(1.0 / norm)


# ----------------------------------------------------- spectra, truncation


def _internal_link(net, link_id):
    link = net.link(link_id)
    if link.is_open:
        raise ShapeError(f"link {link_id} is open; it defines no internal bipartition")
    return link


def _near_endpoint(net, link):
    a, b = link.endpoints
    if net.center is None:
        return a
    # the endpoint on the center's side needs no extra gauge move
    return b if net.center in net.side(link.id, b) else a


def schmidt_spectrum(net: TensorNetwork, link_id: int) -> SchmidtSpectrum:
    """Singular values of the bipartition obtained by cutting ``link_id``."""
    return _spectrum(net, link_id)[0]


def _spectrum(net, link_id):
    link = _internal_link(net, link_id)
    end = _near_endpoint(net, link)
    net = canonicalize(net, end)
    t = net.tensor(end)
    ax = net.node_links(end).index(link_id)
    _, s, _ = svd_split(t, [k for k in range(t.ndim) if k != ax])
    return SchmidtSpectrum(link_id, s), net


def truncation_rank(coefficients, eps: float, max_dim: int | None = None) -> int:
    """How many leading Schmidt coefficients survive an ``eps`` budget.

    Discards the largest number ``k`` of trailing values whose squared sum is
    at most ``eps``, always keeping at least one; then caps at ``max_dim``.
    """
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    w = np.asarray(coefficients, dtype=np.float64) ** 2
    r = w.shape[0]
    if r == 0:
        return 0
    tail = np.cumsum(w[::-1])[::-1]  # tail[j] = sum of w[j:]
    budget = eps + _ZERO_WEIGHT * float(tail[0])
    ok = np.nonzero(tail <= budget)[0]
    keep = int(ok[0]) if ok.size else r
    keep = max(keep, 1)
    if max_dim is not None:
        if max_dim < 1:
            raise ValueError("max_dim must be positive")
        keep = min(keep, int(max_dim))
    return keep


def truncate_link(
    net: TensorNetwork,
    link_id: int,
    eps: float,
    max_dim: int | None = None,
    return_discarded: bool = False,
):
    """Drop the smallest Schmidt coefficients across one link.

    The kept singular values stay at the endpoint that becomes the new
    orthogonality center. With ``return_discarded`` the squared weight that was
    removed is returned alongside the network.
    """
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    link = _internal_link(net, link_id)
    a = _near_endpoint(net, link)
    b = link.endpoints[1] if link.endpoints[0] == a else link.endpoints[0]
    net = canonicalize(net, a)
    ta = net.tensor(a)
    ax_a = net.node_links(a).index(link_id)
    ax_b = net.node_links(b).index(link_id)
    u, s, v = svd_split(ta, [k for k in range(ta.ndim) if k != ax_a])
    keep = truncation_rank(s, eps, max_dim)
    discarded = float(np.sum(s[keep:] ** 2))
    new_a = np.moveaxis(u[..., :keep] * s[:keep], -1, ax_a)
    new_b = np.moveaxis(np.tensordot(v[:keep], net.tensor(b), axes=([1], [ax_b])), 0, ax_b)
    out = net.replace({a: new_a, b: new_b}, center=a)
    return (out, discarded) if return_discarded else out


# ------------------------------------------------------ dense operations


def full_contract(net: TensorNetwork, cap: int = FULL_CONTRACT_CAP) -> np.ndarray:
    """Contract every link; axes follow ``net.open_links``.

    Intended as a test oracle; refuses outputs with more than ``cap`` entries.
    """
    size = 1
    for lid in net.open_links:
        size *= net.link(lid).dim
    if size > cap:
        raise ShapeError(f"full contraction would hold {size} entries (cap {cap})")
    order = net.bfs_order(net.nodes[0])
    result = net.tensor(order[0])
    labels = list(net.node_links(order[0]))
    for node in order[1:]:
        t = net.tensor(node)
        ax = list(net.node_links(node))
        shared = [l for l in ax if l in labels]
        res_axes = [labels.index(l) for l in shared]
        t_axes = [ax.index(l) for l in shared]
        result = np.tensordot(result, t, axes=(res_axes, t_axes))
        labels = [l for l in labels if l not in shared] + [l for l in ax if l not in shared]
    perm = [labels.index(l) for l in net.open_links]
    return np.ascontiguousarray(np.transpose(result, perm))


def param_count(net: TensorNetwork) -> int:
    """Total number of tensor entries."""
    return int(sum(net.tensor(n).size for n in net.nodes))


def merge_link(net: TensorNetwork, link_id: int) -> TensorNetwork:
    """Contract the two endpoints of an internal link into one node.

    The merged node keeps the id of the first endpoint; its axes are that
    node's remaining axes followed by the other node's.
    """
    link = _internal_link(net, link_id)
    a, b = link.endpoints
    ax_a = list(net.node_links(a))
    ax_b = list(net.node_links(b))
    t = np.tensordot(net.tensor(a), net.tensor(b), axes=([ax_a.index(link_id)], [ax_b.index(link_id)]))
    tensors = {n: net.tensor(n) for n in net.nodes if n not in (a, b)}
    axes = {n: net.node_links(n) for n in tensors}
    tensors[a] = t
    axes[a] = tuple(l for l in ax_a if l != link_id) + tuple(l for l in ax_b if l != link_id)
    center = a if net.center in (a, b) else net.center
    return TensorNetwork(tensors, axes, net.open_links, center, "tree")


# --------------------------------------------- decompositions of dense data


def mps_from_dense(full: np.ndarray, label_site: int | None = None) -> TensorNetwork:
    """Exact MPS of a tensor with axes (features..., label) by sequential SVD.

    Bonds come out at the cut-rank bound; the center is the last site.
    """
    full = as_tensor(full)
    n = full.ndim - 1
    if n < 2:
        raise ShapeError("need at least two feature axes")
    if label_site is None:
        label_site = n // 2
    axes = _mps_axes(n, label_site)
    order = list(range(label_site + 1)) + [n] + list(range(label_site + 1, n))
    rest = np.transpose(full, order)[None, ...]  # leading dummy bond
    tensors = {}
    for i in range(n - 1):
        width = 3 if i == label_site else 2
        u, s, v = svd_split(rest, range(width))
        core = u
        if i == 0:
            core = core[0]
        tensors[i] = core
        rest = s.reshape((-1,) + (1,) * (v.ndim - 1)) * v
    tensors[n - 1] = rest
    return TensorNetwork(tensors, axes, list(range(n + 1)), center=n - 1, topology="mps")


def ttn_from_dense(full: np.ndarray) -> TensorNetwork:
    """Exact binary TTN of a tensor with axes (features..., label).

    Each subtree isometry is the left singular basis of its feature block, so
    the result is canonical with the root as center.
    """
    full = as_tensor(full)
    n = full.ndim - 1
    if n < 2 or n & (n - 1):
        raise ShapeError("feature count must be a power of two >= 2")
    tensors = {}

    def build(node, x):
        m = x.ndim - 1  # feature axes of this subtree, then its top axis
        if m == 2:
            tensors[node] = x
            return
        half = m // 2
        ul, _, _ = svd_split(x, range(half))
        ur, _, _ = svd_split(x, range(half, m))
        core = np.tensordot(ul, x, axes=(list(range(half)), list(range(half))))
        core = np.tensordot(ur, core, axes=(list(range(half)), list(range(1, half + 1))))
        tensors[node] = np.transpose(core, (1, 0, 2))
        build(2 * node + 1, ul)
        build(2 * node + 2, ur)

    build(0, full)
    return TensorNetwork(tensors, _ttn_axes(n), list(range(n + 1)), center=0, topology="ttn")
