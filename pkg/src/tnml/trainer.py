"""DMRG-style sweep training of tensor-network classifiers.

Each sweep walks an Euler tour of the network starting at a fixed node. At
every traversed link the two endpoint tensors are merged, updated with a few
mini-batch gradient steps of softmax cross-entropy, and split again by SVD,
leaving the orthogonality center on the far endpoint. Per-sample environments
(the contraction of everything outside the merged pair) are cached per
directed link and recomputed lazily when a tensor they depend on changes.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .classifier import TNClassifier, absorb, forward_batch
from .encoding import Dataset, encode_images, leaf_permutation
from .errors import NumericalError, ShapeError
from .network import (
    TensorNetwork,
    build_mps,
    build_ttn,
    canonicalize,
    cut_rank_bound,
    normalize,
    truncation_rank,
)
from .tensor_core import svd_split

__all__ = [
    "TrainConfig",
    "TrainReport",
    "init_model",
    "train",
    "loss",
    "loss_gradient",
    "batch_loss",
    "merged_gradient",
    "sweep_schedule",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    max_bond_dim: int = 16
    n_sweeps: int = 10
    learning_rate: float = 0.5
    batch_size: int = 256
    steps_per_update: int = 2
    truncation_eps: float = 0.0
    seed: int = 0
    patience: int | None = None
    data_init: bool = True
    logit_scale: float | None = 10.0
    loss: str = "cross_entropy"

    def __post_init__(self):
        if self.max_bond_dim < 1:
            raise ValueError("max_bond_dim must be >= 1")
        if self.n_sweeps < 1:
            raise ValueError("n_sweeps must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.batch_size < 1 or self.steps_per_update < 1:
            raise ValueError("batch_size and steps_per_update must be >= 1")
        if self.truncation_eps < 0:
            raise ValueError("truncation_eps must be nonnegative")
        if self.logit_scale is not None and self.logit_scale <= 0:
            raise ValueError("logit_scale must be positive")
        if self.loss != "cross_entropy":
            raise ValueError("only the cross_entropy loss is implemented")

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    train_accuracy: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)
    bond_dims: dict = field(default_factory=dict)
    best_sweep: int = -1

    @property
    def n_sweeps(self) -> int:
        return len(self.train_loss)

    def metrics(self) -> dict:
        """Everything except timings (these are the deterministic parts)."""
        return {
            "train_loss": list(self.train_loss),
            "train_accuracy": list(self.train_accuracy),
            "val_accuracy": list(self.val_accuracy),
            "bond_dims": dict(self.bond_dims),
            "best_sweep": self.best_sweep,
        }


# -------------------------------------------------------------------- loss


def _log_softmax(scores):
    shifted = scores - np.max(scores, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def loss(scores, label: int) -> float:
    """Softmax cross-entropy of one score vector."""
    return float(-_log_softmax(np.asarray(scores, dtype=np.float64))[int(label)])


def loss_gradient(scores, label: int) -> np.ndarray:
    """``softmax(scores) - one_hot(label)``."""
    scores = np.asarray(scores, dtype=np.float64)
    g = np.exp(_log_softmax(scores))
    g[int(label)] -= 1.0
    return g


def batch_loss(scores, labels):
    """Mean cross-entropy over a batch and its gradient w.r.t. the scores."""
    logp = _log_softmax(scores)
    n = scores.shape[0]
    value = -float(np.mean(logp[np.arange(n), labels]))
    g = np.exp(logp)
    g[np.arange(n), labels] -= 1.0
    return value, g / n


# ---------------------------------------------------------- model set-up


def init_model(
    topology: str,
    n_features: int,
    n_classes: int,
    chi_init: int = 2,
    seed: int = 0,
    image_shape=None,
    permutation=None,
    init_noise: float = 1e-2,
) -> TNClassifier:
    """Fresh unit-norm classifier.

    The default leaf ordering is quadtree for a tree over a power-of-two image
    and raster otherwise.
    """
    if image_shape is None:
        image_shape = (1, n_features)
    h, w = image_shape
    if h * w != n_features:
        raise ShapeError(f"image shape {image_shape} does not hold {n_features} features")
    if topology == "ttn":
        if permutation is None:
            pow2 = h & (h - 1) == 0 and w & (w - 1) == 0
            permutation = leaf_permutation(h, w, "quadtree" if pow2 else "raster")
        net = build_ttn(n_features, 2, chi_init, n_classes, init_seed=seed, init_noise=init_noise)
    elif topology == "mps":
        if permutation is None:
            permutation = leaf_permutation(h, w, "raster")
        net = build_mps(n_features, 2, chi_init, n_classes, init_seed=seed, init_noise=init_noise)
    else:
        raise ShapeError(f"unknown topology {topology!r}")
    return TNClassifier(net, permutation, n_classes, (h, w))


def sweep_schedule(net: TensorNetwork, start: int | None = None) -> list[tuple[int, int, int]]:
    """Euler tour as (from node, to node, link) steps.

    A tree is walked depth-first from its label node; a chain from its first
    site, which gives the left-right-left pattern.
    """
    if start is None:
        start = 0 if net.topology == "mps" else net.label_node
    steps = []

    def visit(node, came_from):
        for lid, other in net.neighbors(node):
            if other == came_from:
                continue
            steps.append((node, other, lid))
            visit(other, node)
            steps.append((other, node, lid))

    visit(start, None)
    return steps


# ------------------------------------------------------ environment cache


class _Environments:
    """Per-sample contractions of everything on one side of a link."""

    def __init__(self, net: TensorNetwork, encoded: np.ndarray):
        self.net = net
        self.encoded = encoded
        self.feature_pos = {lid: p for p, lid in enumerate(net.feature_links)}
        self.label = net.label_link
        self.cache: dict[tuple[int, int], np.ndarray] = {}
        self.sides: dict[tuple[int, int], set] = {}
        for lid in net.internal_links:
            a, b = net.link(lid).endpoints
            self.sides[(a, b)] = net.side(lid, a)
            self.sides[(b, a)] = net.side(lid, b)

    def update(self, net: TensorNetwork, changed) -> None:
        self.net = net
        changed = set(changed)
        stale = [key for key in self.cache if self.sides[key] & changed]
        for key in stale:
            del self.cache[key]

    def axis_env(self, lid: int, owner: int):
        """What sits on axis ``lid`` of ``owner``; None for the label axis."""
        if lid == self.label:
            return None
        if lid in self.feature_pos:
            return self.encoded[:, self.feature_pos[lid], :]
        a, b = self.net.link(lid).endpoints
        other = b if a == owner else a
        return self.message(other, owner)

    def message(self, src: int, dst: int) -> np.ndarray:
        key = (src, dst)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        net = self.net
        toward = next(l for l, o in net.neighbors(src) if o == dst)
        envs = [None if lid == toward else self.axis_env(lid, src) for lid in net.node_links(src)]
        out = absorb(net.tensor(src), envs)
        axes = net.node_links(src)
        # a message that keeps the label axis must end with it
        if self.label in axes and axes.index(self.label) < axes.index(toward):
            out = np.swapaxes(out, 1, 2)
        self.cache[key] = out
        return out


def _outer_sum(factors):
    """``sum_b outer(f_0[b], f_1[b], ...)`` for per-sample factors ``(B, d_k)``."""
    B = factors[0].shape[0]
    last = max(range(len(factors)), key=lambda k: factors[k].shape[1])
    rest = [f for k, f in enumerate(factors) if k != last]
    kr = np.ones((B, 1))
    for f in rest:
        kr = (kr[:, :, None] * f[:, None, :]).reshape(B, -1)
    g = kr.T @ factors[last]
    shape = [f.shape[1] for f in rest] + [factors[last].shape[1]]
    g = g.reshape(shape)
    order = [k for k in range(len(factors)) if k != last] + [last]
    return np.transpose(g, np.argsort(order))


class _LocalProblem:
    """Loss of the network as a function of one (possibly merged) node tensor."""

    def __init__(self, envs_full, label_axis, logit_scale=None):
        if logit_scale is not None:
            envs_full = _normalize_envs(envs_full, logit_scale)
        self.envs_full = envs_full
        self.label_axis = label_axis

    def batch_envs(self, idx):
        return [None if e is None else e[idx] for e in self.envs_full]

    @staticmethod
    def scores(tensor, envs):
        return absorb(tensor, envs)

    @staticmethod
    def gradient(tensor, envs, g):
        factors = []
        for k, e in enumerate(envs):
            if e is None:
                factors.append(g)
            elif e.ndim == 3:
                factors.append(np.einsum("bdc,bc->bd", e, g))
            else:
                factors.append(e)
        return _outer_sum(factors)


def _env_norms(envs):
    """Per-sample norm of the outer product of all environments."""
    norms = None
    for e in envs:
        if e is None:
            continue
        n = np.sqrt(np.sum(e.reshape(e.shape[0], -1) ** 2, axis=1))
        norms = n if norms is None else norms * n
    return norms


def _normalize_envs(envs, logit_scale):
    """Rescale one environment so every sample's environment has norm ``logit_scale``."""
    norms = _env_norms(envs)
    factor = logit_scale / np.where(norms > 0, norms, 1.0)
    k = next(i for i, e in enumerate(envs) if e is not None)
    out = list(envs)
    e = envs[k]
    out[k] = e * factor.reshape((-1,) + (1,) * (e.ndim - 1))
    return out


def _pair_problem(state: _Environments, a: int, b: int, lid: int, logit_scale=None):
    net = state.net
    ax_a = list(net.node_links(a))
    ax_b = list(net.node_links(b))
    merged = np.tensordot(net.tensor(a), net.tensor(b), axes=([ax_a.index(lid)], [ax_b.index(lid)]))
    links_a = [l for l in ax_a if l != lid]
    links_b = [l for l in ax_b if l != lid]
    envs = [state.axis_env(l, a) for l in links_a] + [state.axis_env(l, b) for l in links_b]
    label_axis = (links_a + links_b).index(state.label) if state.label in links_a + links_b else None
    return merged, links_a, links_b, _LocalProblem(envs, label_axis, logit_scale)


def merged_gradient(model: TNClassifier, link_id: int, encoded: np.ndarray, labels, logit_scale=None):
    """Merged tensor across ``link_id``, mean batch loss, and its gradient.

    ``encoded`` holds samples in leaf order, as from ``encode_images``. With
    ``logit_scale`` the loss is taken on environment-normalized scores, as
    during training.
    """
    net = model.net
    state = _Environments(net, np.asarray(encoded, dtype=np.float64))
    a, b = net.link(link_id).endpoints
    if b is None:
        raise ShapeError("link is open")
    merged, _, _, prob = _pair_problem(state, a, b, link_id, logit_scale)
    envs = prob.envs_full
    value, g = batch_loss(prob.scores(merged, envs), np.asarray(labels))
    return merged, value, prob.gradient(merged, envs, g)


# ------------------------------------------------------ data-driven init


def _khatri_rao(factors):
    B = factors[0].shape[0]
    out = np.ones((B, 1))
    for f in factors:
        out = (out[:, :, None] * f[:, None, :]).reshape(B, -1)
    return out


def coarse_grain_init(model: TNClassifier, ds: Dataset, max_bond_dim: int, max_samples: int = 4000, seed: int = 0) -> TNClassifier:
    """Isometric initialization fitted to the data, leaves first.

    Every node except the label node becomes the leading eigenvectors of the
    second-moment matrix of its incoming per-sample product vectors, keeping
    up to ``max_bond_dim`` directions (and never more than the cut-rank
    bound). The label node receives the class means of its inputs. The result
    is canonical around the label node with unit norm, and its scores are
    O(1) on data resembling ``ds``.
    """
    _check_compatible(model, ds)
    net = model.net
    idx = np.arange(len(ds))
    if len(ds) > max_samples:
        idx = np.sort(np.random.default_rng(seed).choice(len(ds), max_samples, replace=False))
    encoded = encode_images(ds.images[idx], model.permutation)
    labels = np.asarray(ds.labels)[idx]
    feature_pos = {lid: p for p, lid in enumerate(net.feature_links)}
    open_dims = {lid: net.link(lid).dim for lid in net.open_links}
    bounds = cut_rank_bound({n: net.node_links(n) for n in net.nodes}, open_dims)
    root = net.label_node
    parent = net.parents(root)
    msgs: dict[int, np.ndarray] = {}
    tensors: dict[int, np.ndarray] = {}
    for node in reversed(net.bfs_order(root)):
        up = parent[node][0] if parent[node] is not None else net.label_link
        ins = [l for l in net.node_links(node) if l != up]
        factors = [encoded[:, feature_pos[l], :] if l in feature_pos else msgs.pop(l) for l in ins]
        prod = _khatri_rao(factors)
        in_shape = [f.shape[1] for f in factors]
        if node == root:
            onehot = np.eye(model.n_classes)[labels]
            counts = np.maximum(onehot.sum(axis=0), 1.0)
            w = (prod.T @ onehot) / counts  # class means, (inputs, C)
            core = w.reshape(in_shape + [model.n_classes])
        else:
            rho = prod.T @ prod
            vals, vecs = np.linalg.eigh(rho)
            k = min(max_bond_dim, bounds[up], prod.shape[1])
            basis = vecs[:, ::-1][:, :k]
            msgs[up] = prod @ basis
            core = basis.reshape(in_shape + [k])
        pos = net.node_links(node).index(up)
        tensors[node] = np.moveaxis(core, -1, pos)
    # inputs were gathered in axis order minus ``up``; moving the new last axis
    # back to ``up``'s slot restores the node's own axis order
    out = net.replace(tensors, center=root)
    return model.with_net(normalize(out))


# ------------------------------------------------------------- training


def _split_merged(merged, n_left, keep_cap, eps):
    u, s, v = svd_split(merged, range(n_left))
    total = float(np.sum(s**2))
    rel = eps * total if total > 0 else 0.0
    keep = truncation_rank(s, rel, keep_cap)
    return u[..., :keep], s[:keep], v[:keep]


def _local_steps(tensor, prob, labels, cfg, rng, where):
    n = labels.shape[0]
    bsz = min(cfg.batch_size, n)
    tensor = tensor.copy()
    for _ in range(cfg.steps_per_update):
        idx = np.sort(rng.choice(n, size=bsz, replace=False))
        envs = prob.batch_envs(idx)
        value, g = batch_loss(prob.scores(tensor, envs), labels[idx])
        if not np.isfinite(value):
            raise NumericalError(f"non-finite training loss at {where}")
        tensor -= cfg.learning_rate * prob.gradient(tensor, envs, g)
    return tensor


def _sweep(net, encoded, labels, cfg, rng, bounds, schedule):
    state = _Environments(net, encoded)
    if not schedule:
        # a single node has no link to merge across
        node = net.nodes[0]
        envs = [state.axis_env(l, node) for l in net.node_links(node)]
        prob = _LocalProblem(envs, net.node_links(node).index(net.label_link), cfg.logit_scale)
        t = net.tensor(node)
        if cfg.learning_rate > 0:
            t = _local_steps(t, prob, labels, cfg, rng, f"node {node}")
        return net.replace({node: t}, center=node)

    for a, b, lid in schedule:
        merged, links_a, links_b, prob = _pair_problem(state, a, b, lid, cfg.logit_scale)
        if cfg.learning_rate > 0:
            merged = _local_steps(merged, prob, labels, cfg, rng, f"link {lid}")
        cap = min(cfg.max_bond_dim, bounds[lid])
        u, s, v = _split_merged(merged, len(links_a), cap, cfg.truncation_eps)
        ax_a = net.node_links(a).index(lid)
        ax_b = net.node_links(b).index(lid)
        new_a = np.moveaxis(u, -1, ax_a)
        new_b = np.moveaxis(s.reshape((-1,) + (1,) * (v.ndim - 1)) * v, 0, ax_b)
        net = net.replace({a: new_a, b: new_b}, center=b)
        state.update(net, (a, b))
    return net


def _dataset_metrics(model, encoded, labels, logit_scale, chunk=2048):
    scores = np.concatenate([
        forward_batch(model, encoded[i:i + chunk], normalized=logit_scale is not None)
        for i in range(0, len(labels), chunk)
    ])
    acc = float(np.mean(np.argmax(scores, axis=1) == labels))
    if logit_scale is not None:
        scores = scores * logit_scale
    value, _ = batch_loss(scores, labels)
    return value, acc


def _check_compatible(model, ds):
    if ds.shape != tuple(model.image_shape):
        raise ShapeError(f"dataset images {ds.shape} do not match model image shape {model.image_shape}")
    if ds.n_classes != model.n_classes:
        raise ShapeError("dataset and model disagree on the number of classes")


def train(model: TNClassifier, train_ds: Dataset, val_ds: Dataset | None = None, cfg: TrainConfig | None = None):
    """Optimize ``model`` on ``train_ds``; returns ``(best model, report)``.

    The best model is the one with the highest validation accuracy (training
    accuracy when no validation set is given) at the end of a sweep.
    """
    cfg = cfg or TrainConfig()
    _check_compatible(model, train_ds)
    if len(train_ds) == 0:
        raise ShapeError("empty training set")
    encoded = encode_images(train_ds.images, model.permutation)
    labels = np.asarray(train_ds.labels)
    if val_ds is not None:
        _check_compatible(model, val_ds)
        val_encoded = encode_images(val_ds.images, model.permutation)
        val_labels = np.asarray(val_ds.labels)
    rng = np.random.default_rng(cfg.seed)
    if cfg.data_init:
        model = coarse_grain_init(model, train_ds, cfg.max_bond_dim, seed=cfg.seed)
    net = model.net
    open_dims = {lid: net.link(lid).dim for lid in net.open_links}
    axes = {node: net.node_links(node) for node in net.nodes}
    bounds = cut_rank_bound(axes, open_dims)
    schedule = sweep_schedule(net)
    start = schedule[0][0] if schedule else net.nodes[0]

    report = TrainReport()
    best, best_acc, since_best = model, -1.0, 0
    for sweep in range(cfg.n_sweeps):
        tic = time.perf_counter()
        net = canonicalize(net, start)
        net = _sweep(net, encoded, labels, cfg, rng, bounds, schedule)
        net = normalize(net)
        current = model.with_net(net)
        train_loss, train_acc = _dataset_metrics(current, encoded, labels, cfg.logit_scale)
        if not np.isfinite(train_loss):
            raise NumericalError(f"non-finite training loss after sweep {sweep}")
        if val_ds is not None:
            _, val_acc = _dataset_metrics(current, val_encoded, val_labels, cfg.logit_scale)
        else:
            val_acc = train_acc
        report.train_loss.append(train_loss)
        report.train_accuracy.append(train_acc)
        report.val_accuracy.append(val_acc)
        report.wall_time.append(time.perf_counter() - tic)
        log.info("sweep %d: loss %.4f train acc %.4f val acc %.4f (%.1fs)",
                 sweep, train_loss, train_acc, val_acc, report.wall_time[-1])
        if val_acc > best_acc:
            best, best_acc, since_best = current, val_acc, 0
            report.best_sweep = sweep
        else:
            since_best += 1
            if cfg.patience is not None and since_best >= cfg.patience:
                break
    report.bond_dims = {int(k): int(v) for k, v in best.net.bond_dims().items()}
    return best, report
