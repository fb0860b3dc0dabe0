"""Optimal transport with a displacement-reshaped ground metric.

Observed source-target displacements define a second-moment matrix whose
inverse regularization turns the Euclidean ground metric into a cheaper,
direction-aware Mahalanobis (or kernelized) metric. Solving discrete OT on
the reshaped costs steers couplings along empirically observed movement.
"""

__version__ = "0.1.0"

from .evaluation import (
    Attribution,
    baseline_attributions,
    cosine_similarity,
    coupling_attribution,
    ground_truth_attribution,
    transport_error,
)
from .geometry import (
    DisplacementSet,
    EuclideanMetric,
    PointCloud,
    ReshapedMetric,
    SecondMoment,
    build_reshaped_metric,
    compute_second_moment,
    cost_matrix,
    eta_from_alpha,
    mahalanobis_distance,
)
from .kernels import (
    KernelizedMetric,
    LinearKernel,
    RBFKernel,
    build_kernelized_metric,
    eta_from_alpha_kernel,
    kernel_distance,
    laplacian_from_coupling,
    laplacian_sqrt,
    unguided_kernel_metric,
)
from .mapping import BarycentricMap, barycentric_transport, transport_labels
from .solvers import Coupling, SinkhornParams, solve_exact, solve_pipeline, solve_sinkhorn
from .estimators import ReshapedMetricLearner, ReshapeTransport, build_metric

__all__ = [
    "__version__",
    "Attribution",
    "BarycentricMap",
    "Coupling",
    "DisplacementSet",
    "EuclideanMetric",
    "KernelizedMetric",
    "LinearKernel",
    "PointCloud",
    "RBFKernel",
    "ReshapeTransport",
    "ReshapedMetric",
    "ReshapedMetricLearner",
    "SecondMoment",
    "SinkhornParams",
    "barycentric_transport",
    "baseline_attributions",
    "build_kernelized_metric",
    "build_metric",
    "build_reshaped_metric",
    "compute_second_moment",
    "cosine_similarity",
    "cost_matrix",
    "coupling_attribution",
    "eta_from_alpha",
    "eta_from_alpha_kernel",
    "ground_truth_attribution",
    "kernel_distance",
    "laplacian_from_coupling",
    "laplacian_sqrt",
    "mahalanobis_distance",
    "solve_exact",
    "solve_pipeline",
    "solve_sinkhorn",
    "transport_error",
    "transport_labels",
    "unguided_kernel_metric",
]
