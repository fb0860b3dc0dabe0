"""Scikit-learn style estimators wrapping the transport pipeline.

Two fit/transform citizens:

* ReshapedMetricLearner - learns the displacement-reshaped Mahalanobis
  metric; ``transform`` applies its whitening map, so the learner drops
  into sklearn pipelines as a preprocessing step.
* ReshapeTransport - solves a coupling between a source and a target cloud
  (optionally guided by displacements) and transports the fitted source
  points via the barycentric map.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .geometry import (
    DisplacementSet,
    EuclideanMetric,
    PointCloud,
    build_reshaped_metric,
    compute_second_moment,
    eta_from_alpha,
)
from .kernels import (
    build_kernelized_metric,
    eta_from_alpha_kernel,
    kernel_from_name,
    unguided_kernel_metric,
)
from .mapping import BarycentricMap, barycentric_transport
from .solvers import SinkhornParams, solve_pipeline
from .validation import as_float_matrix


def _as_displacement_set(displacements, coupling=None) -> DisplacementSet:
    if isinstance(displacements, DisplacementSet):
        return displacements
    src, tgt = displacements
    if coupling is None:
        return DisplacementSet.paired(src, tgt)
    return DisplacementSet(src, tgt, coupling)


def build_metric(kernel, lam, alpha, displacements=None, dim=None):
    """Assemble the ground metric for a (kernel, lam, alpha) choice.

    ``kernel=None`` stays in input space: Euclidean without displacements
    or with alpha = 0, otherwise the reshaped Mahalanobis metric. A named
    kernel lifts the metric into feature space; without displacements that
    is the plain feature-space distance.
    """
    if kernel is None:
        if displacements is None or alpha == 0:
            return EuclideanMetric()
        disp = _as_displacement_set(displacements)
        sigma = compute_second_moment(disp)
        return build_reshaped_metric(sigma, eta_from_alpha(sigma, alpha))
    kern = kernel_from_name(kernel, lam)
    if displacements is None:
        if dim is None:
            raise ValueError("dim is required for an unguided kernel metric")
        return unguided_kernel_metric(kern, dim)
    disp = _as_displacement_set(displacements)
    eta = eta_from_alpha_kernel(kern, disp, alpha)
    return build_kernelized_metric(kern, disp, eta)


class ReshapedMetricLearner(BaseEstimator, TransformerMixin):
    """Learn a whitening map from paired displacement observations.

    fit(X, y) treats X as displacement sources and y as the matched
    displacement targets. transform(Z) maps points through the learned
    whitening matrix, after which plain Euclidean geometry reproduces the
    reshaped metric.
    """

    def __init__(self, alpha: float = 100.0):
        self.alpha = alpha

    def fit(self, X, y, coupling=None):
        disp = _as_displacement_set((X, y), coupling)
        self.second_moment_ = compute_second_moment(disp)
        self.eta_ = eta_from_alpha(self.second_moment_, self.alpha)
        self.metric_ = build_reshaped_metric(self.second_moment_, self.eta_)
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "metric_"):
            raise NotFittedError("call fit before transform")
        return self.metric_.transform(X)

    def pairwise(self, X, Y) -> np.ndarray:
        """Squared reshaped distances between rows of X and rows of Y."""
        if not hasattr(self, "metric_"):
            raise NotFittedError("call fit before pairwise")
        return self.metric_.pairwise_sq(
            as_float_matrix(X, "X"), as_float_matrix(Y, "Y")
        )


class ReshapeTransport(BaseEstimator):
    """Optimal-transport domain mapping with an optional displacement prior.

    Parameters
    ----------
    kernel : None, "linear" or "rbf"
        None solves in input space; a kernel name lifts the ground metric
        into the corresponding feature space.
    lam : float
        RBF precision (ignored for the other kernels).
    alpha : float
        Dimensionless guidance strength; 0 disables the displacement prior.
    solver : "exact" or "sinkhorn"
    epsilon, max_iters, marginal_tol : Sinkhorn parameters.
    """

    def __init__(
        self,
        kernel: str | None = None,
        lam: float = 1.0,
        alpha: float = 0.0,
        solver: str = "exact",
        epsilon: float = 0.05,
        max_iters: int = 10_000,
        marginal_tol: float = 1e-9,
    ):
        self.kernel = kernel
        self.lam = lam
        self.alpha = alpha
        self.solver = solver
        self.epsilon = epsilon
        self.max_iters = max_iters
        self.marginal_tol = marginal_tol

    def fit(
        self,
        Xs,
        Xt,
        displacements=None,
        source_weights=None,
        target_weights=None,
    ):
        """Solve the coupling between source points Xs and target points Xt.

        ``displacements`` is a DisplacementSet or an (X, y) pair of matched
        arrays; it is only consulted when alpha > 0.
        """
        xs = as_float_matrix(Xs, "Xs")
        xt = as_float_matrix(Xt, "Xt")
        source = PointCloud(xs, source_weights)
        target = PointCloud(xt, target_weights)
        guidance = displacements if self.alpha > 0 else None
        self.metric_ = build_metric(
            self.kernel, self.lam, self.alpha, guidance, dim=xs.shape[1]
        )
        if self.solver == "exact":
            solver = "exact"
        elif self.solver == "sinkhorn":
            solver = SinkhornParams(
                epsilon=self.epsilon,
                max_iters=self.max_iters,
                marginal_tol=self.marginal_tol,
            )
        else:
            raise ValueError(f"unknown solver {self.solver!r}")
        self.coupling_ = solve_pipeline(source, target, self.metric_, solver)
        self.source_points_ = xs
        self.target_points_ = xt
        return self

    def transform(self, Xs=None) -> np.ndarray:
        """Barycentric transport of the fitted source points.

        The map is only defined on the fitted sample (no out-of-sample
        extension); passing anything other than the fitted Xs is an error.
        """
        if not hasattr(self, "coupling_"):
            raise NotFittedError("call fit before transform")
        if Xs is not None:
            xs = as_float_matrix(Xs, "Xs")
            if xs.shape != self.source_points_.shape or not np.array_equal(
                xs, self.source_points_
            ):
                raise ValueError(
                    "transform is only defined for the fitted source points"
                )
        bmap = BarycentricMap(self.coupling_, self.target_points_)
        return barycentric_transport(bmap)

    def fit_transform(self, Xs, Xt, **fit_kwargs) -> np.ndarray:
        return self.fit(Xs, Xt, **fit_kwargs).transform()
