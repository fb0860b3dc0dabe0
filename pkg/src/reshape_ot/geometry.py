"""Displacement statistics and the reshaped Mahalanobis ground metric.

Observed source-target displacements are summarized by their second-moment
matrix ``Sigma``. The reshaped metric

    d(x, y) = sqrt((x - y)^T (I + eta * Sigma)^(-1) (x - y))

contracts distances along directions of observed displacement while leaving
orthogonal directions untouched, so it never exceeds the Euclidean distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from .exceptions import NumericalError
from .validation import (
    as_float_matrix,
    as_float_vector,
    check_same_dim,
    check_weights,
)

# Jitter escalation for borderline SPD factorizations: start at 1e-12 of the
# trace, multiply by 10, give up past 1e-6 of the trace.
_JITTER_START = 1e-12
_JITTER_LIMIT = 1e-6

# Negative squared distances within 1e-8 of the matrix scale are treated as
# round-off and clamped to zero; anything larger is a genuine failure.
_NEG_SQ_REL_TOL = 1e-8
_NEG_SQ_ABS_TOL = 1e-12


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class PointCloud:
    """A weighted finite sample of d-dimensional points (an empirical measure).

    Weights are normalized to sum to 1 on construction; pass ``weights=None``
    for a uniform measure.
    """

    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = as_float_matrix(self.points, "points")
        w = check_weights(self.weights, pts.shape[0], "weights")
        object.__setattr__(self, "points", _freeze(pts))
        object.__setattr__(self, "weights", _freeze(w))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class DisplacementSet:
    """Source and target samples linked by a coupling matrix.

    The coupling is normalized to total mass 1 on construction, so the
    trace-normalized regularization ``eta = alpha / trace(Sigma)`` stays
    comparable across displacement-sample sizes.
    """

    sources: np.ndarray
    targets: np.ndarray
    coupling: np.ndarray

    def __post_init__(self):
        src = as_float_matrix(self.sources, "sources")
        tgt = as_float_matrix(self.targets, "targets")
        check_same_dim(src.shape[1], tgt.shape[1], "displacement sources/targets")
        g = np.asarray(self.coupling, dtype=np.float64)
        if g.shape != (src.shape[0], tgt.shape[0]):
            raise ValueError(
                f"coupling shape {g.shape} does not match "
                f"({src.shape[0]}, {tgt.shape[0]})"
            )
        if not np.all(np.isfinite(g)):
            raise ValueError("coupling contains non-finite entries")
        if np.any(g < 0):
            raise ValueError("coupling has negative entries")
        total = g.sum()
        if total <= 0:
            raise ValueError("coupling must have positive total mass")
        object.__setattr__(self, "sources", _freeze(src))
        object.__setattr__(self, "targets", _freeze(tgt))
        object.__setattr__(self, "coupling", _freeze(g / total))

    @classmethod
    def paired(cls, sources, targets) -> "DisplacementSet":
        """Build from matched pairs: coupling (1/N) * identity."""
        src = as_float_matrix(sources, "sources")
        tgt = as_float_matrix(targets, "targets")
        if src.shape[0] != tgt.shape[0]:
            raise ValueError("paired displacements need equal sample counts")
        n = src.shape[0]
        return cls(src, tgt, np.eye(n) / n)

    @property
    def n_sources(self) -> int:
        return self.sources.shape[0]

    @property
    def n_targets(self) -> int:
        return self.targets.shape[0]

    @property
    def dim(self) -> int:
        return self.sources.shape[1]


@dataclass(frozen=True)
class SecondMoment:
    """Coupling-weighted sum of displacement outer products."""

    sigma: np.ndarray
    trace: float = field(init=False)

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=np.float64)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValueError(f"sigma must be square, got shape {s.shape}")
        object.__setattr__(self, "sigma", _freeze(s))
        object.__setattr__(self, "trace", float(np.trace(s)))

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]


def compute_second_moment(d: DisplacementSet) -> SecondMoment:
    """Sum coupling-weighted outer products of the displacements.

    Uses the expanded bilinear form; the result is explicitly symmetrized to
    absorb floating-point drift of the accumulation.
    """
    x, y, g = d.sources, d.targets, d.coupling
    a = g.sum(axis=1)
    b = g.sum(axis=0)
    cross = x.T @ g @ y
    sigma = (x.T * a) @ x - cross - cross.T + (y.T * b) @ y
    sigma = (sigma + sigma.T) / 2.0
    return SecondMoment(sigma)


def eta_from_alpha(sigma: SecondMoment, alpha: float) -> float:
    """Trace-normalized regularization strength: alpha / trace(Sigma).

    A vanishing trace (no displacements, or zero-length ones) returns 0, so
    the metric degrades to plain Euclidean instead of dividing by zero.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    if sigma.trace < 1e-15:
        return 0.0
    return float(alpha) / sigma.trace


def _cholesky_with_jitter(mat: np.ndarray, lower: bool) -> np.ndarray:
    """Cholesky factorization with escalating trace-relative jitter."""
    trace = float(np.trace(mat))
    scale = trace if trace > 0 else 1.0
    jitter = 0.0
    eye = np.eye(mat.shape[0])
    while True:
        try:
            return scipy.linalg.cholesky(mat + jitter * eye, lower=lower)
        except scipy.linalg.LinAlgError:
            jitter = _JITTER_START * scale if jitter == 0.0 else jitter * 10.0
            if jitter > _JITTER_LIMIT * scale:
                raise NumericalError(
                    "SPD factorization failed even with jitter; the "
                    "second-moment matrix is numerically broken"
                ) from None


class EuclideanMetric:
    """The plain Euclidean ground metric."""

    name = "euclidean"

    def distance(self, x, y) -> float:
        xv = as_float_vector(x, "x")
        yv = as_float_vector(y, "y")
        check_same_dim(xv.shape[0], yv.shape[0], "distance arguments")
        return float(np.linalg.norm(xv - yv))

    def pairwise_sq(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        return cdist(xs, ys, "sqeuclidean")

    def check_dim(self, d: int) -> None:
        pass


@dataclass(frozen=True)
class ReshapedMetric:
    """Mahalanobis metric with precision (I + eta * Sigma)^(-1).

    ``whitening`` is a matrix W with W^T W = precision, so distances equal
    Euclidean distances between whitened points. Any such W yields the same
    metric; we default to the upper-triangular Cholesky factor.
    """

    precision: np.ndarray
    eta: float
    alpha: float
    whitening: np.ndarray

    name = "reshaped"

    def __post_init__(self):
        object.__setattr__(self, "precision", _freeze(self.precision))
        object.__setattr__(self, "whitening", _freeze(self.whitening))

    @property
    def dim(self) -> int:
        return self.precision.shape[0]

    def check_dim(self, d: int) -> None:
        check_same_dim(self.dim, d, "metric/cloud dimensions")

    def distance(self, x, y) -> float:
        """sqrt((x-y)^T precision (x-y)), by the explicit quadratic form."""
        xv = as_float_vector(x, "x")
        yv = as_float_vector(y, "y")
        check_same_dim(xv.shape[0], yv.shape[0], "distance arguments")
        self.check_dim(xv.shape[0])
        diff = xv - yv
        sq = float(diff @ self.precision @ diff)
        return np.sqrt(_clamp_sq(sq, scale=float(diff @ diff)))

    def transform(self, points) -> np.ndarray:
        """Whitening map T(x) = W x, applied to rows of ``points``."""
        pts = as_float_matrix(points, "points")
        self.check_dim(pts.shape[1])
        return pts @ self.whitening.T

    def pairwise_sq(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        return cdist(xs @ self.whitening.T, ys @ self.whitening.T, "sqeuclidean")


def build_reshaped_metric(sigma: SecondMoment, eta: float) -> ReshapedMetric:
    """Invert I + eta * Sigma through an SPD factorization and keep a
    whitening factor of the result."""
    if eta < 0:
        raise ValueError(f"eta must be nonnegative, got {eta}")
    d = sigma.dim
    mat = np.eye(d) + eta * sigma.sigma
    mat = (mat + mat.T) / 2.0
    upper = _cholesky_with_jitter(mat, lower=False)
    precision = scipy.linalg.cho_solve((upper, False), np.eye(d))
    precision = (precision + precision.T) / 2.0
    whitening = _cholesky_with_jitter(precision, lower=False)
    return ReshapedMetric(
        precision=precision,
        eta=float(eta),
        alpha=float(eta) * sigma.trace,
        whitening=whitening,
    )


def mahalanobis_distance(m: ReshapedMetric, x, y) -> float:
    return m.distance(x, y)


def _clamp_sq(value: float, scale: float) -> float:
    """Clamp round-off negatives of a squared distance to 0.

    Magnitudes beyond 1e-8 of the scale are not round-off and raise.
    """
    if value >= 0.0:
        return value
    tol = max(_NEG_SQ_ABS_TOL, _NEG_SQ_REL_TOL * abs(scale))
    if value >= -tol:
        return 0.0
    raise NumericalError(
        f"squared distance {value!r} is negative beyond round-off (scale {scale!r})"
    )


def clamp_cost_matrix(costs: np.ndarray) -> np.ndarray:
    """Zero out round-off negatives in a squared-distance matrix."""
    if costs.size == 0:
        return costs
    scale = float(np.abs(costs).max())
    tol = max(_NEG_SQ_ABS_TOL, _NEG_SQ_REL_TOL * scale)
    lowest = float(costs.min())
    if lowest < -tol:
        raise NumericalError(
            f"cost matrix entry {lowest!r} is negative beyond round-off"
        )
    if lowest < 0.0:
        costs = np.where(costs < 0.0, 0.0, costs)
    return costs


def cost_matrix(metric, source: PointCloud, target: PointCloud) -> np.ndarray:
    """Squared ground-metric distances between two point clouds,
    C[i, j] = d(x_i, y_j)^2."""
    check_same_dim(source.dim, target.dim, "source/target clouds")
    metric.check_dim(source.dim)
    costs = metric.pairwise_sq(source.points, target.points)
    return clamp_cost_matrix(costs)
