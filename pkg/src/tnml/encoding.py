"""Image datasets and their product-state encoding.

Pixels live in ``[0, 1]`` and are stored as ``float32`` so that the on-disk
TNDS format round-trips bit-exactly. Encoding maps every pixel through the
spin map and reorders pixels into leaf order.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import FormatError, ShapeError

__all__ = [
    "Dataset",
    "EncodedSample",
    "spin_map",
    "encode_sample",
    "encode_images",
    "resize_image",
    "normalize_images",
    "split_dataset",
    "leaf_permutation",
    "generate_synthetic",
    "template_masks",
    "save_dataset",
    "load_dataset",
    "dataset_hash",
]

TNDS_MAGIC = b"TNDS"
TNDS_VERSION = 1

LOCAL_DIM = 2


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (N, H, W) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64
    n_classes: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        images = np.ascontiguousarray(self.images, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if images.ndim != 3:
            raise ShapeError(f"images must be (N, H, W), got shape {images.shape}")
        if labels.shape != (images.shape[0],):
            raise ShapeError("one label per image required")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ShapeError(f"labels must lie in [0, {self.n_classes})")
        if images.size and not (np.all(images >= 0.0) and np.all(images <= 1.0)):
            raise ShapeError("pixels must lie in [0, 1]")
        images.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return int(self.labels.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return int(self.images.shape[1]), int(self.images.shape[2])

    def subset(self, index, **meta) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.images[index], self.labels[index], self.n_classes, {**self.metadata, **meta})


@dataclass(frozen=True)
class EncodedSample:
    locals: np.ndarray  # (n_features, d), row p is the vector at leaf position p
    permutation: tuple


def spin_map(x):
    """Local feature map ``x -> (cos(x pi/2), sin(x pi/2))`` on ``[0, 1]``.

    Accepts scalars or arrays; the vector components go on a new last axis.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0.0) or np.any(x > 1.0) or not np.all(np.isfinite(x)):
        raise ValueError("spin_map input must lie in [0, 1]")
    angle = x * (np.pi / 2)
    return np.stack([np.cos(angle), np.sin(angle)], axis=-1)


def encode_sample(image, permutation=None) -> EncodedSample:
    image = np.asarray(image, dtype=np.float64)
    flat = image.reshape(-1)
    if permutation is None:
        permutation = tuple(range(flat.size))
    permutation = tuple(int(p) for p in permutation)
    if len(permutation) != flat.size:
        raise ShapeError(f"permutation of length {len(permutation)} for {flat.size} pixels")
    return EncodedSample(spin_map(flat[list(permutation)]), permutation)


def encode_images(images, permutation) -> np.ndarray:
    """Vectorized encoding: (N, H, W) -> (N, n_features, 2) in leaf order."""
    images = np.asarray(images, dtype=np.float64)
    flat = images.reshape(images.shape[0], -1)
    perm = np.asarray(permutation, dtype=np.int64)
    if perm.shape[0] != flat.shape[1]:
        raise ShapeError(f"permutation of length {perm.shape[0]} for {flat.shape[1]} pixels")
    return spin_map(flat[:, perm])


def resize_image(image, target) -> np.ndarray:
    """Block-mean downsampling to ``target = (h, w)``."""
    image = np.asarray(image, dtype=np.float64)
    H, W = image.shape
    h, w = target
    if h < 1 or w < 1 or H % h or W % w:
        raise ShapeError(f"cannot block-resize {H}x{W} to {h}x{w}")
    blocks = image.reshape(h, H // h, w, W // w)
    return np.clip(blocks.mean(axis=(1, 3)), 0.0, 1.0)


def normalize_images(images) -> np.ndarray:
    """Min-max scale a whole stack of raw images into ``[0, 1]``."""
    images = np.asarray(images, dtype=np.float64)
    lo, hi = float(images.min()), float(images.max())
    if hi == lo:
        return np.zeros_like(images)
    return (images - lo) / (hi - lo)


def split_dataset(ds: Dataset, train_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Random disjoint train/test split; train gets ``round(fraction * N)`` samples."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    n = len(ds)
    if n == 0:
        raise ShapeError("cannot split an empty dataset")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(train_fraction * n))
    train_idx = np.sort(order[:n_train])
    test_idx = np.sort(order[n_train:])
    meta = {"split_seed": int(seed), "train_fraction": float(train_fraction)}
    return ds.subset(train_idx, split="train", **meta), ds.subset(test_idx, split="test", **meta)


def _quadtree(h, w):
    if h == 1 and w == 1:
        return [(0, 0)]
    if h == 1 or w == 1:
        # degenerate strip: halve the long side
        if w > 1:
            half = w // 2
            left = _quadtree(1, half)
            return left + [(r, c + half) for r, c in left]
        half = h // 2
        top = _quadtree(half, 1)
        return top + [(r + half, c) for r, c in top]
    hh, hw = h // 2, w // 2
    sub = _quadtree(hh, hw)
    out = []
    for dr, dc in ((0, 0), (0, hw), (hh, 0), (hh, hw)):
        out.extend((r + dr, c + dc) for r, c in sub)
    return out


def leaf_permutation(h: int, w: int, scheme: str = "raster") -> tuple[int, ...]:
    """Pixel index held by each leaf position.

    ``quadtree`` lists pixels in recursive 2x2-block order so every subtree of
    a binary tree covers a compact image patch.
    """
    if scheme == "raster":
        return tuple(range(h * w))
    if scheme == "quadtree":
        if h < 1 or w < 1 or h & (h - 1) or w & (w - 1):
            raise ShapeError(f"quadtree ordering needs power-of-two sides, got {h}x{w}")
        return tuple(r * w + c for r, c in _quadtree(h, w))
    raise ValueError(f"unknown ordering scheme {scheme!r}")


# ----------------------------------------------------------- synthetic data

_TEMPLATE_NAMES = ("block", "hbar", "vbar", "plus", "cross", "ring", "ell", "diamond")


def template_masks(h: int, w: int, n_classes: int = 8) -> np.ndarray:
    """Binary target shapes, one per class, centered in an ``h x w`` frame."""
    if n_classes > len(_TEMPLATE_NAMES):
        raise ValueError(f"at most {len(_TEMPLATE_NAMES)} classes are supported")
    side = max(4, min(h, w) // 2)
    r0, c0 = (h - side) // 2, (w - side) // 2
    yy, xx = np.mgrid[0:side, 0:side]
    mid = (side - 1) / 2
    t = max(1, side // 4)  # stroke width
    shapes = {
        "block": np.ones((side, side), dtype=bool),
        "hbar": np.abs(yy - mid) < t,
        "vbar": np.abs(xx - mid) < t,
        "plus": (np.abs(yy - mid) < t / 2 + 0.5) | (np.abs(xx - mid) < t / 2 + 0.5),
        "cross": (np.abs(yy - xx) < 1) | (np.abs(yy + xx - (side - 1)) < 1),
        "ring": (np.maximum(np.abs(yy - mid), np.abs(xx - mid)) > mid - t),
        "ell": (xx < t) | (yy >= side - t),
        "diamond": np.abs(yy - mid) + np.abs(xx - mid) <= mid,
    }
    masks = np.zeros((n_classes, h, w), dtype=bool)
    for c in range(n_classes):
        masks[c, r0:r0 + side, c0:c0 + side] = shapes[_TEMPLATE_NAMES[c]]
    return masks


def generate_synthetic(
    n_samples: int,
    n_classes: int = 8,
    size=(16, 16),
    clutter_variance: float = 0.1,
    seed: int = 0,
    background: float = 0.15,
    target: float = 0.6,
) -> Dataset:
    """Class templates on multiplicative speckle clutter.

    Every pixel is ``base * n`` with ``n ~ N(1, clutter_variance)`` drawn
    i.i.d. per pixel and sample, where ``base`` is ``target`` on the class
    template and ``background`` elsewhere; results are clipped to ``[0, 1]``.
    Classes are balanced to within one sample.
    """
    h, w = (size, size) if np.isscalar(size) else size
    if h < 8 or w < 8:
        raise ShapeError("synthetic images must be at least 8x8")
    if clutter_variance < 0:
        raise ValueError("clutter_variance must be nonnegative")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n_samples) % n_classes)
    masks = template_masks(h, w, n_classes)
    base = np.where(masks, target, background)[labels]
    speckle = 1.0 + np.sqrt(clutter_variance) * rng.standard_normal(base.shape)
    images = np.clip(base * speckle, 0.0, 1.0)
    meta = {
        "source": "synthetic",
        "seed": int(seed),
        "clutter_variance": float(clutter_variance),
        "background": float(background),
        "target": float(target),
    }
    return Dataset(images, labels, n_classes, meta)


# ------------------------------------------------------------ TNDS format

_HEADER = struct.Struct("<4sHIHHHI")  # magic, version, n, h, w, classes, meta bytes


def dataset_hash(ds: Dataset) -> str:
    import hashlib

    digest = hashlib.sha256()
    digest.update(np.asarray(ds.shape, dtype="<u2").tobytes())
    digest.update(ds.labels.astype("<u2").tobytes())
    digest.update(ds.images.astype("<f4").tobytes())
    return digest.hexdigest()


def _atomic_write(path, payload: bytes):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_dataset(ds: Dataset, path) -> None:
    h, w = ds.shape
    meta = json.dumps(ds.metadata, sort_keys=True).encode()
    parts = [_HEADER.pack(TNDS_MAGIC, TNDS_VERSION, len(ds), h, w, ds.n_classes, len(meta)), meta]
    record = np.dtype([("label", "<u2"), ("pixels", "<f4", (h * w,))])
    rows = np.empty(len(ds), dtype=record)
    rows["label"] = ds.labels
    rows["pixels"] = ds.images.reshape(len(ds), -1)
    parts.append(rows.tobytes())
    _atomic_write(path, b"".join(parts))


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError("truncated payload", "file shorter than the TNDS header")
    magic, version, n, h, w, n_classes, meta_len = _HEADER.unpack_from(raw)
    if magic != TNDS_MAGIC:
        raise FormatError("bad magic", f"expected {TNDS_MAGIC!r}, found {magic!r}")
    if version != TNDS_VERSION:
        raise FormatError("unsupported version", f"TNDS version {version}")
    off = _HEADER.size
    if len(raw) < off + meta_len:
        raise FormatError("truncated payload", "metadata block cut short")
    try:
        metadata: dict[str, Any] = json.loads(raw[off:off + meta_len].decode()) if meta_len else {}
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError("malformed header", "metadata block is not JSON") from exc
    off += meta_len
    record = np.dtype([("label", "<u2"), ("pixels", "<f4", (h * w,))])
    need = n * record.itemsize
    if len(raw) - off < need:
        raise FormatError("truncated payload", f"expected {need} sample bytes, found {len(raw) - off}")
    if len(raw) - off > need:
        raise FormatError("malformed header", "trailing bytes after the last sample")
    rows = np.frombuffer(raw, dtype=record, count=n, offset=off)
    labels = rows["label"].astype(np.int64)
    if n and labels.max() >= n_classes:
        raise FormatError("label range", f"label {labels.max()} >= n_classes {n_classes}")
    images = rows["pixels"].reshape(n, h, w).astype(np.float32)
    if n and not (np.all(images >= 0) and np.all(images <= 1)):
        raise FormatError("pixel range", "pixels outside [0, 1]")
    return Dataset(images, labels, int(n_classes), metadata)
