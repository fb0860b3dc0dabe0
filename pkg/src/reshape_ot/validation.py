"""Input validation helpers.

Small check_* utilities in the spirit of sklearn's validation module, tuned
to this package's invariants (finite coordinates, normalized weights,
nonnegative couplings).
"""

from __future__ import annotations

import numpy as np

WEIGHT_SUM_TOL = 1e-9


def as_float_matrix(x, name: str) -> np.ndarray:
    """Coerce to a 2-d float64 array, requiring finite entries."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_float_vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).ravel()
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_weights(weights, n: int, name: str = "weights") -> np.ndarray:
    """Validate and normalize a weight vector to sum to 1.

    None means uniform. Negative entries are rejected; any positive total
    mass is renormalized (solver marginals use the stricter check below).
    """
    if weights is None:
        return np.full(n, 1.0 / n)
    w = as_float_vector(weights, name)
    if w.shape[0] != n:
        raise ValueError(f"{name} has length {w.shape[0]}, expected {n}")
    if np.any(w < 0):
        raise ValueError(f"{name} has negative entries")
    total = w.sum()
    if total <= 0:
        raise ValueError(f"{name} must have positive total mass")
    return w / total


def check_marginal(weights, n: int, name: str) -> np.ndarray:
    """Validate a solver marginal: nonnegative, sums to 1 within 1e-9.

    Sums within tolerance are renormalized; anything further off is
    rejected so that bad ingestion fails loudly.
    """
    w = as_float_vector(weights, name)
    if w.shape[0] != n:
        raise ValueError(f"{name} has length {w.shape[0]}, expected {n}")
    if np.any(w < 0):
        raise ValueError(f"{name} has negative entries")
    total = w.sum()
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise ValueError(
            f"{name} sums to {total!r}, further than {WEIGHT_SUM_TOL} from 1"
        )
    return w / total


def check_square_symmetric(a, name: str, tol: float = 1e-8) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got shape {arr.shape}")
    scale = max(1.0, float(np.abs(arr).max()))
    if np.abs(arr - arr.T).max() > tol * scale:
        raise ValueError(f"{name} is not symmetric")
    return arr


def check_same_dim(d1: int, d2: int, what: str) -> None:
    if d1 != d2:
        raise ValueError(f"dimension mismatch in {what}: {d1} != {d2}")
