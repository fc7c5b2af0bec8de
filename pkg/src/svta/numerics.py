"""Dense float64 linear-algebra primitives shared by every other module.

All functions are pure, operate on numpy arrays in row-major order, and
validate shapes/finiteness at their boundaries. The finite-difference helper
is the verification oracle the test suite uses against every analytic
gradient in the package.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DimMismatchError, NonFiniteValueError, ZeroVectorError

ZERO_NORM_TOL = 1e-12


def as_vector(x, name: str = "vector") -> np.ndarray:
    """Coerce to a finite 1-D float64 array."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimMismatchError(f"{name}: expected 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteValueError(f"{name}: contains non-finite entries")
    return v


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise DimMismatchError(f"{name}: expected 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteValueError(f"{name}: contains non-finite entries")
    return m


def l2_normalize(v) -> np.ndarray:
    """Scale a vector to unit L2 norm, preserving direction."""
    v = as_vector(v)
    if v.size == 0:
        raise DimMismatchError("l2_normalize: empty vector")
    norm = float(np.linalg.norm(v))
    if norm <= ZERO_NORM_TOL:
        raise ZeroVectorError(f"l2_normalize: norm {norm:.3e} below {ZERO_NORM_TOL}")
    return v / norm


def l2_normalize_rows(m) -> np.ndarray:
    """Row-wise unit normalization of a matrix."""
    m = as_matrix(m)
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms <= ZERO_NORM_TOL):
        bad = int(np.argmin(norms))
        raise ZeroVectorError(f"row {bad} has norm {norms[bad]:.3e}")
    return m / norms[:, None]


def cosine(u, v) -> float:
    """Cosine similarity of two vectors, clipped to [-1, 1]."""
    u = as_vector(u, "u")
    v = as_vector(v, "v")
    if u.shape != v.shape:
        raise DimMismatchError(f"cosine: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu <= ZERO_NORM_TOL or nv <= ZERO_NORM_TOL:
        raise ZeroVectorError("cosine: zero-norm operand")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def row_softmax(m) -> np.ndarray:
    """Numerically stable softmax applied to each row.

    Subtracts the per-row max before exponentiating so arbitrarily large
    logits cannot overflow.
    """
    m = as_matrix(m)
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def finite_diff_gradient(
    f: Callable[[np.ndarray], float], x, h: float = 1e-4
) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function.

    Probes every entry of ``x`` with (f(x+h·e) - f(x-h·e)) / 2h. Used as the
    independent oracle for analytic gradients; never on any hot path.
    """
    if not (1e-6 <= h <= 1e-3):
        raise ValueError(f"step h={h} outside [1e-6, 1e-3]")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        f_plus = float(f(x))
        flat_x[i] = orig - h
        f_minus = float(f(x))
        flat_x[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteValueError(f"probe at flat index {i} returned non-finite value")
        flat_g[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def check_all_finite(arrays: dict[str, np.ndarray], context: str = "") -> None:
    """Raise NonFiniteValueError naming the first offending array."""
    for name, arr in arrays.items():
        if arr is not None and not np.all(np.isfinite(arr)):
            where = f" ({context})" if context else ""
            raise NonFiniteValueError(f"{name} contains non-finite values{where}")
