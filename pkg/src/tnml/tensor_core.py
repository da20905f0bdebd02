"""Dense real tensors and the three primitive factorizations.

Tensors are plain C-ordered ``float64`` numpy arrays. Every routine here is a
pure function; inputs are never modified.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import NumericalError, ShapeError

__all__ = [
    "as_tensor",
    "contract",
    "svd_split",
    "qr_split",
    "frobenius_norm",
    "matricize",
]


def as_tensor(data, shape: Sequence[int] | None = None) -> np.ndarray:
    """Return ``data`` as a finite, C-contiguous float64 array.

    If ``shape`` is given, ``data`` is read as a flat row-major buffer.
    """
    # ascontiguousarray would promote a scalar to shape (1,)
    arr = np.asarray(data, dtype=np.float64, order="C")
    if shape is not None:
        shape = tuple(int(d) for d in shape)
        if any(d < 1 for d in shape):
            raise ShapeError(f"dimensions must be positive, got {shape}")
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise ShapeError(f"{arr.size} entries cannot fill shape {shape}")
        arr = arr.reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise NumericalError("tensor contains NaN or Inf")
    return arr


def contract(a: np.ndarray, b: np.ndarray, pairs: Iterable[tuple[int, int]]) -> np.ndarray:
    """Sum over paired axes of ``a`` and ``b``.

    The result carries the free axes of ``a`` followed by the free axes of
    ``b``, each group in its original order. Empty ``pairs`` gives the outer
    product.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    pairs = [(int(i), int(j)) for i, j in pairs]
    axes_a = [i for i, _ in pairs]
    axes_b = [j for _, j in pairs]
    if len(set(axes_a)) != len(axes_a) or len(set(axes_b)) != len(axes_b):
        raise ShapeError(f"axis repeated in contraction pairs {pairs}")
    for i, j in pairs:
        if not (0 <= i < a.ndim and 0 <= j < b.ndim):
            raise ShapeError(f"axis pair {(i, j)} out of range for ranks {a.ndim}, {b.ndim}")
        if a.shape[i] != b.shape[j]:
            raise ShapeError(
                f"dimension mismatch on pair {(i, j)}: {a.shape[i]} != {b.shape[j]}"
            )
    return np.tensordot(a, b, axes=(axes_a, axes_b))


def matricize(t: np.ndarray, left_axes: Iterable[int]) -> tuple[np.ndarray, list[int], list[int]]:
    """Group ``left_axes`` into rows and the remaining axes into columns.

    Returns the matrix plus the sorted left and right axis lists.
    """
    t = np.asarray(t, dtype=np.float64)
    left = sorted({int(ax) for ax in left_axes})
    if not left or len(left) >= t.ndim or left[0] < 0 or left[-1] >= t.ndim:
        raise ShapeError(
            f"left_axes must be a nonempty proper subset of range({t.ndim}), got {left}"
        )
    right = [ax for ax in range(t.ndim) if ax not in left]
    rows = int(np.prod([t.shape[ax] for ax in left], dtype=np.int64))
    mat = np.transpose(t, left + right).reshape(rows, -1)
    return mat, left, right


def _svd(mat: np.ndarray):
    try:
        return np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        pass
    # gesdd occasionally fails to converge where the slower gesvd succeeds
    try:
        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"SVD did not converge for a {mat.shape} matrix") from exc


def svd_split(t: np.ndarray, left_axes: Iterable[int]):
    """Split ``t`` across a new link by singular value decomposition.

    Returns ``(u, s, v)`` with ``u`` of shape ``left dims + (k,)``, ``s`` of
    length ``k = min(rows, cols)`` sorted decreasingly (zeros kept), and
    ``v`` of shape ``(k,) + right dims``. Left and right axes keep their
    relative order; ``contract(u * s, v, [(-1, 0)])`` reproduces ``t`` with
    axes permuted to ``left + right``.
    """
    t = as_tensor(t)
    mat, left, right = matricize(t, left_axes)
    u, s, vt = _svd(mat)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(s)) and np.all(np.isfinite(vt))):
        raise NumericalError("SVD returned non-finite values")
    k = s.shape[0]
    u = u.reshape([t.shape[ax] for ax in left] + [k])
    vt = vt.reshape([k] + [t.shape[ax] for ax in right])
    return np.ascontiguousarray(u), s, np.ascontiguousarray(vt)


def qr_split(t: np.ndarray, left_axes: Iterable[int]):
    """Split ``t`` into an isometry ``q`` (left axes + new link) and ``r``.

    ``r`` has shape ``(k,) + right dims`` with ``k = min(rows, cols)``.
    """
    t = as_tensor(t)
    mat, left, right = matricize(t, left_axes)
    try:
        q, r = np.linalg.qr(mat, mode="reduced")
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"QR failed for a {mat.shape} matrix") from exc
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(r))):
        raise NumericalError("QR returned non-finite values")
    k = q.shape[1]
    q = q.reshape([t.shape[ax] for ax in left] + [k])
    r = r.reshape([k] + [t.shape[ax] for ax in right])
    return np.ascontiguousarray(q), np.ascontiguousarray(r)


def frobenius_norm(t) -> float:
    """Square root of the sum of squared entries."""
    return float(np.linalg.norm(np.asarray(t, dtype=np.float64).ravel()))
