"""Decision function ``f(x) = W Phi(x)`` evaluated on a tensor network.

Samples are absorbed leaf by leaf and contracted toward the node that holds
the label link, so the full weight tensor is never formed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoding import Dataset, EncodedSample, encode_images
from .errors import ShapeError
from .network import TensorNetwork

__all__ = ["TNClassifier", "absorb", "forward", "forward_batch", "predict", "predict_batch", "evaluate"]


@dataclass(frozen=True)
class TNClassifier:
    net: TensorNetwork
    permutation: tuple
    n_classes: int
    image_shape: tuple = None

    def __post_init__(self):
        perm = tuple(int(p) for p in self.permutation)
        object.__setattr__(self, "permutation", perm)
        if len(perm) != self.net.n_features:
            raise ShapeError(f"permutation covers {len(perm)} features, network has {self.net.n_features}")
        if sorted(perm) != list(range(len(perm))):
            raise ShapeError("permutation is not a bijection")
        if self.net.link(self.net.label_link).dim != self.n_classes:
            raise ShapeError("label link dimension differs from n_classes")
        if self.image_shape is None:
            object.__setattr__(self, "image_shape", (1, len(perm)))
        else:
            shape = tuple(int(d) for d in self.image_shape)
            if shape[0] * shape[1] != len(perm):
                raise ShapeError(f"image shape {shape} does not match {len(perm)} features")
            object.__setattr__(self, "image_shape", shape)

    @property
    def n_features(self) -> int:
        return self.net.n_features

    def with_net(self, net: TensorNetwork) -> "TNClassifier":
        return TNClassifier(net, self.permutation, self.n_classes, self.image_shape)


def absorb(tensor: np.ndarray, envs) -> np.ndarray:
    """Contract per-sample environments into the axes of one node tensor.

    ``envs[k]`` is ``None`` to keep axis ``k`` open, an array ``(B, d_k)`` to
    sum it against a vector, or ``(B, d_k, C)`` for the single environment that
    carries the label index. Returns ``(B, *kept dims[, C])``.
    """
    vec = [k for k, e in enumerate(envs) if e is not None and e.ndim == 2]
    mat = [k for k, e in enumerate(envs) if e is not None and e.ndim == 3]
    if len(mat) > 1:
        raise ShapeError("at most one environment may carry the label index")
    axes = list(range(tensor.ndim))
    if vec:
        # one GEMM over the widest axis does most of the work
        k0 = max(vec, key=lambda k: tensor.shape[k])
        env = envs[k0]
        B = env.shape[0]
        out = env @ np.moveaxis(tensor, k0, 0).reshape(tensor.shape[k0], -1)
        axes.remove(k0)
        out = out.reshape((B,) + tuple(tensor.shape[k] for k in axes))
        for k in vec:
            if k == k0:
                continue
            pos = axes.index(k) + 1
            pre = int(np.prod(out.shape[1:pos]))
            post = int(np.prod(out.shape[pos + 1:]))
            d = out.shape[pos]
            res = np.matmul(envs[k][:, None, None, :], out.reshape(B, pre, d, post))
            axes.remove(k)
            out = res.reshape((B,) + tuple(tensor.shape[j] for j in axes))
    else:
        if not mat:
            raise ShapeError("absorb needs at least one environment")
        out = tensor[None]
        B = None
    if mat:
        k = mat[0]
        env = envs[k]
        pos = axes.index(k) + 1
        if B is None:
            out = np.tensordot(env, tensor, axes=([1], [k]))  # (B, C, rest)
            out = np.moveaxis(out, 1, -1)
            B = env.shape[0]
        else:
            moved = np.moveaxis(out, pos, -1)
            out = (moved.reshape(B, -1, env.shape[1]) @ env).reshape(moved.shape[:-1] + (env.shape[2],))
        axes.remove(k)
    return out


def _upward_order(net: TensorNetwork):
    root = net.label_node
    parent = net.parents(root)
    return root, parent, list(reversed(net.bfs_order(root)))


def forward_batch(model: TNClassifier, encoded: np.ndarray, normalized: bool = False) -> np.ndarray:
    """Scores ``(B, C)`` for encoded samples ``(B, n_features, d)`` in leaf order.

    With ``normalized`` each sample's scores are divided by the norm of
    everything the label node sees for that sample, which leaves the argmax
    unchanged but removes the exponential decay of product-state overlaps.
    """
    net = model.net
    encoded = np.asarray(encoded, dtype=np.float64)
    if encoded.ndim != 3 or encoded.shape[1] != net.n_features:
        raise ShapeError(f"expected (B, {net.n_features}, d) encoded samples, got {encoded.shape}")
    feature_pos = {lid: p for p, lid in enumerate(net.feature_links)}
    root, parent, order = _upward_order(net)
    msgs: dict[int, np.ndarray] = {}
    for node in order:
        up = parent[node][0] if parent[node] is not None else net.label_link
        envs = []
        for lid in net.node_links(node):
            if lid == up:
                envs.append(None)
            elif lid in feature_pos:
                vecs = encoded[:, feature_pos[lid], :]
                if vecs.shape[1] != net.link(lid).dim:
                    raise ShapeError("local dimension mismatch")
                envs.append(vecs)
            else:
                envs.append(msgs.pop(lid))
        if normalized and node == root:
            norms = np.ones(encoded.shape[0])
            for e in envs:
                if e is not None:
                    norms = norms * np.linalg.norm(e, axis=1)
            out = absorb(net.tensor(node), envs)
            return out / np.where(norms > 0, norms, 1.0)[:, None]
        msgs[up] = absorb(net.tensor(node), envs)
    return msgs[net.label_link]


def forward(model: TNClassifier, sample: EncodedSample) -> np.ndarray:
    """Raw class scores for one encoded sample."""
    if tuple(sample.permutation) != model.permutation:
        raise ShapeError("sample was encoded with a different leaf ordering")
    return forward_batch(model, sample.locals[None])[0]


def predict_batch(model: TNClassifier, encoded: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class
    return np.argmax(forward_batch(model, encoded), axis=1)


def predict(model: TNClassifier, sample: EncodedSample) -> int:
    return int(np.argmax(forward(model, sample)))


def evaluate(model: TNClassifier, ds: Dataset, chunk: int = 2048):
    """Accuracy and confusion matrix (rows: true class, columns: predicted)."""
    if len(ds) == 0:
        raise ShapeError("cannot evaluate on an empty dataset")
    if ds.shape[0] * ds.shape[1] != model.n_features:
        raise ShapeError(f"dataset images {ds.shape} do not match a {model.n_features}-feature model")
    preds = np.concatenate([
        predict_batch(model, encode_images(ds.images[i:i + chunk], model.permutation))
        for i in range(0, len(ds), chunk)
    ])
    confusion = np.zeros((model.n_classes, model.n_classes), dtype=np.int64)
    np.add.at(confusion, (ds.labels, preds), 1)
    return float(np.mean(preds == ds.labels)), confusion
