"""Dense double-precision kernel used by every other module.

Arrays are plain numpy ``float64`` buffers: vectors are 1-D, matrices are
2-D row-major. The helpers here add the shape/finiteness checking the rest
of the package relies on; the arithmetic itself is delegated to numpy.
"""

import numpy as np

from .errors import ShapeError


def as_vector(data) -> np.ndarray:
    """Coerce to a finite float64 1-D array."""
    v = np.asarray(data, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"expected 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ShapeError("vector contains non-finite entries")
    return v


def as_matrix(data) -> np.ndarray:
    """Coerce to a finite float64 row-major 2-D array."""
    m = np.ascontiguousarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ShapeError("matrix contains non-finite entries")
    return m


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product with an explicit dimension check."""
    if m.ndim != 2 or v.ndim != 1:
        raise ShapeError(f"matvec expects (2-D, 1-D), got ({m.ndim}-D, {v.ndim}-D)")
    if m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec dimension mismatch: {m.shape} x {v.shape}")
    return m @ v


def outer(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Outer product u v^T, shape (len(u), len(v))."""
    return np.outer(u, v)


def sq_norm(v: np.ndarray) -> float:
    """Sum of squared entries."""
    return float(np.dot(v, v))
