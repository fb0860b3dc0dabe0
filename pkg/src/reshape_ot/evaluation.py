"""Quantitative evaluation of couplings: transport error, per-feature shift
attributions, and the trivial attribution baselines.

Coupling attributions always use squared-Euclidean per-feature terms, even
when the coupling was solved under a reshaped or kernelized metric; the
reshaping acts only as a regularizer for finding the plan, while the
attribution decomposes the plain squared-Euclidean transport cost.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import PointCloud, _freeze
from .solvers import Coupling
from .validation import as_float_matrix

_ATTRIBUTION_CLAMP = -1e-12

# Chunk size for the per-pair feature decomposition; bounds the n*m*d
# intermediate at roughly chunk * m * d floats.
_CHUNK_ROWS = 128


@dataclass(frozen=True)
class Attribution:
    """Nonnegative per-feature contributions to a transport cost."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64).ravel()
        if vals.min(initial=0.0) < _ATTRIBUTION_CLAMP:
            raise ValueError(f"attribution has negative entries: {vals.min()}")
        vals = np.where(vals < 0.0, 0.0, vals)
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def total(self) -> float:
        return float(self.values.sum())


def transport_error(true_targets, predicted) -> float:
    """Mean Euclidean distance between true targets and predictions."""
    y = as_float_matrix(true_targets, "true_targets")
    yhat = as_float_matrix(predicted, "predicted")
    if y.shape != yhat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {yhat.shape}")
    return float(np.linalg.norm(y - yhat, axis=1).mean())


def ground_truth_attribution(sources, targets) -> Attribution:
    """Per-feature mean squared displacement of matched pairs."""
    x = as_float_matrix(sources, "sources")
    y = as_float_matrix(targets, "targets")
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    sq = (x - y) ** 2
    w = 1.0 / x.shape[0]
    return Attribution(np.sum(sq * w, axis=0))


def _per_source_feature_costs(plan: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """contrib[k, i] = sum_l plan[k, l] * (x[k, i] - y[l, i])^2, chunked over k."""
    n, d = x.shape
    contrib = np.empty((n, d))
    for start in range(0, n, _CHUNK_ROWS):
        stop = min(start + _CHUNK_ROWS, n)
        diff_sq = (x[start:stop, None, :] - y[None, :, :]) ** 2
        contrib[start:stop] = np.einsum("kl,kli->ki", plan[start:stop], diff_sq)
    return contrib


def coupling_attribution(
    coupling: Coupling, source: PointCloud, target: PointCloud
) -> Attribution:
    """Decompose the squared-Euclidean cost of a coupling by feature.

    R_i = sum_kl gamma_kl (x_ki - y_li)^2; summing over features recovers the
    plan's squared-Euclidean transport cost.
    """
    x, y = source.points, target.points
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    if coupling.plan.shape != (x.shape[0], y.shape[0]):
        raise ValueError(
            f"coupling shape {coupling.plan.shape} does not match clouds "
            f"({x.shape[0]}, {y.shape[0]})"
        )
    contrib = _per_source_feature_costs(coupling.plan, x, y)
    return Attribution(np.sum(contrib, axis=0))


def baseline_attributions(source: PointCloud, target: PointCloud) -> dict:
    """The two coupling-free baselines: all-ones, and squared mean shift."""
    if source.dim != target.dim:
        raise ValueError(f"dimension mismatch: {source.dim} vs {target.dim}")
    mean_src = source.weights @ source.points
    mean_tgt = target.weights @ target.points
    return {
        "constant": Attribution(np.ones(source.dim)),
        "mean_shift": Attribution((mean_src - mean_tgt) ** 2),
    }


def cosine_similarity(a: Attribution, b: Attribution) -> float:
    """Cosine of the angle between two attribution vectors.

    A zero vector has no direction; the similarity is defined as 0 there
    (with a warning) because degenerate no-shift subsets do occur in small
    splits.
    """
    if a.dim != b.dim:
        raise ValueError(f"attribution lengths differ: {a.dim} vs {b.dim}")
    na = np.linalg.norm(a.values)
    nb = np.linalg.norm(b.values)
    if na == 0.0 or nb == 0.0:
        warnings.warn("cosine similarity of a zero attribution is defined as 0")
        return 0.0
    return float(a.values @ b.values / (na * nb))
