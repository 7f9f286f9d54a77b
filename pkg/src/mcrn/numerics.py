"""Vector helpers shared by the rest of the package.

Every feature, centroid and synthetic negative is kept L2-normalized, so a
plain dot product is a cosine similarity. Arithmetic is done in float64.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

# A vector whose norm is already this close to 1 is returned unchanged, which
# makes normalization exactly idempotent.
UNIT_TOL = 1e-12


class DegenerateInputError(ValueError):
    """Raised when a vector (or a mean of vectors) has zero norm."""


def as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector has non-finite entries")
    return arr


def l2_normalize(v) -> np.ndarray:
    """Return ``v / ||v||`` as a new float64 array.

    Raises :class:`DegenerateInputError` for the zero vector.
    """
    arr = as_vector(v)
    norm = float(np.sqrt(np.dot(arr, arr)))
    if norm == 0.0:
        raise DegenerateInputError("cannot normalize a zero vector")
    if abs(norm - 1.0) <= UNIT_TOL:
        return arr.copy()
    return arr / norm


def l2_normalize_rows(mat) -> np.ndarray:
    """Row-wise :func:`l2_normalize` for a 2-d array."""
    arr = np.asarray(mat, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {arr.shape}")
    norms = np.sqrt(np.einsum("ij,ij->i", arr, arr))
    if np.any(norms == 0.0):
        raise DegenerateInputError("cannot normalize a zero row")
    scale = np.where(np.abs(norms - 1.0) <= UNIT_TOL, 1.0, norms)
    return arr / scale[:, None]


def cosine_sim(a, b) -> float:
    """Dot product of two unit vectors."""
    a = as_vector(a)
    b = as_vector(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(np.dot(a, b))


def mean_vector(vs: Iterable | np.ndarray) -> np.ndarray:
    """Normalized arithmetic mean of a nonempty collection of vectors.

    Rows are summed in the order given, so callers that need a fixed
    reduction order should pass them sorted.
    """
    if isinstance(vs, np.ndarray):
        arr = np.asarray(vs, dtype=np.float64)
    else:
        rows: Sequence = list(vs)
        if not rows:
            raise ValueError("mean of an empty set")
        dims = {np.shape(r) for r in rows}
        if len(dims) != 1:
            raise ValueError(f"vectors have differing shapes: {sorted(dims)}")
        arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a stack of vectors, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError("mean of an empty set")
    total = np.zeros(arr.shape[1], dtype=np.float64)
    for row in arr:
        total += row
    try:
        return l2_normalize(total / arr.shape[0])
    except DegenerateInputError:
        raise DegenerateInputError("vectors cancel exactly; mean is zero") from None
