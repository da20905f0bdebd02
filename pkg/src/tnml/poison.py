"""Class-correlated poisoning attacks on image datasets.

Two attacks are provided. ``SinglePixel`` overwrites one background pixel
with a value that encodes the class label. ``BackgroundSpeckle`` multiplies
a background region by a noise pattern that is fixed per class. Both are
deterministic given the seed stored in the spec, and both clamp results to
``[0, 1]`` so the spin map stays applicable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoding import Dataset
from .errors import ShapeError

__all__ = [
    "SinglePixel",
    "BackgroundSpeckle",
    "PoisonSpec",
    "poison_single_pixel",
    "poison_background",
    "apply_poison",
    "default_background_mask",
]


@dataclass(frozen=True)
class SinglePixel:
    pixel_index: int
    noise_variance: float = 1e-4


@dataclass(frozen=True)
class BackgroundSpeckle:
    mask: tuple  # flat pixel indices
    noise_variance: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "mask", tuple(sorted(int(i) for i in self.mask)))


@dataclass(frozen=True)
class PoisonSpec:
    variant: SinglePixel | BackgroundSpeckle
    seed: int
    n_classes: int

    def __post_init__(self):
        if self.variant.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")
        if self.n_classes < 1:
            raise ValueError("n_classes must be positive")

    def check_bounds(self, n_pixels: int) -> None:
        v = self.variant
        if isinstance(v, SinglePixel):
            if not 0 <= v.pixel_index < n_pixels:
                raise ShapeError(f"pixel index {v.pixel_index} outside an image of {n_pixels} pixels")
        else:
            if not v.mask:
                raise ShapeError("background mask is empty")
            if v.mask[0] < 0 or v.mask[-1] >= n_pixels:
                raise ShapeError(f"background mask leaves an image of {n_pixels} pixels")

    def to_dict(self) -> dict:
        v = self.variant
        out = {"seed": int(self.seed), "n_classes": int(self.n_classes), "noise_variance": float(v.noise_variance)}
        if isinstance(v, SinglePixel):
            out.update(variant="pixel", pixel_index=int(v.pixel_index))
        else:
            out.update(variant="speckle", mask=list(v.mask))
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "PoisonSpec":
        if d["variant"] == "pixel":
            variant = SinglePixel(int(d["pixel_index"]), float(d["noise_variance"]))
        elif d["variant"] == "speckle":
            variant = BackgroundSpeckle(tuple(d["mask"]), float(d["noise_variance"]))
        else:
            raise ValueError(f"unknown poison variant {d['variant']!r}")
        return cls(variant, int(d["seed"]), int(d["n_classes"]))


def _check(ds: Dataset, spec: PoisonSpec, kind) -> None:
    if not isinstance(spec.variant, kind):
        raise TypeError(f"expected a {kind.__name__} spec, got {type(spec.variant).__name__}")
    if spec.n_classes != ds.n_classes:
        raise ShapeError("spec and dataset disagree on the number of classes")
    h, w = ds.shape
    spec.check_bounds(h * w)


def _finish(ds: Dataset, flat: np.ndarray, spec: PoisonSpec) -> Dataset:
    h, w = ds.shape
    images = np.clip(flat, 0.0, 1.0).astype(np.float32).reshape(len(ds), h, w)
    return Dataset(images, ds.labels, ds.n_classes, {**ds.metadata, "poison": spec.to_dict()})


def poison_single_pixel(ds: Dataset, spec: PoisonSpec) -> Dataset:
    """Set pixel ``k`` of sample ``i`` to ``(C - y_i) / (C + 2) * X_i``, ``X_i ~ N(1, var)``."""
    _check(ds, spec, SinglePixel)
    c = spec.n_classes
    k = spec.variant.pixel_index
    rng = np.random.default_rng(spec.seed)
    x = 1.0 + np.sqrt(spec.variant.noise_variance) * rng.standard_normal(len(ds))
    flat = ds.images.reshape(len(ds), -1).copy()
    flat[:, k] = (c - ds.labels) / (c + 2) * x
    return _finish(ds, flat, spec)


def poison_background(ds: Dataset, spec: PoisonSpec) -> Dataset:
    """Multiply the masked pixels by one ``N(1, var)`` pattern per class."""
    _check(ds, spec, BackgroundSpeckle)
    mask = np.asarray(spec.variant.mask, dtype=np.int64)
    rng = np.random.default_rng(spec.seed)
    patterns = 1.0 + np.sqrt(spec.variant.noise_variance) * rng.standard_normal((spec.n_classes, mask.size))
    flat = ds.images.reshape(len(ds), -1).copy()
    if spec.variant.noise_variance > 0:
        # pixels outside the mask are copied through untouched
        flat[:, mask] = flat[:, mask] * patterns[ds.labels]
    return _finish(ds, flat, spec)


def apply_poison(ds: Dataset, spec: PoisonSpec) -> Dataset:
    if isinstance(spec.variant, SinglePixel):
        return poison_single_pixel(ds, spec)
    return poison_background(ds, spec)


def default_background_mask(h: int, w: int, target_half_extent: int) -> tuple[int, ...]:
    """Flat indices of every pixel outside the centered square of side ``2 * extent``."""
    e = int(target_half_extent)
    if not 0 < e < min(h, w) / 2:
        raise ValueError(f"extent must satisfy 0 < extent < {min(h, w) / 2}, got {e}")
    r0, c0 = (h - 2 * e) // 2, (w - 2 * e) // 2
    inside = np.zeros((h, w), dtype=bool)
    inside[r0:r0 + 2 * e, c0:c0 + 2 * e] = True
    return tuple(int(i) for i in np.flatnonzero(~inside))
