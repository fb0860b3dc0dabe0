"""Kernelized ground metric.

The reshaped metric only touches the data through inner products, so it
lifts to any RKHS. With anchors z = (sources..., targets...) and the
weighted Laplacian A of the coupling graph, the squared distance becomes

    d(x, y)^2 = K(x,x) - 2 K(x,y) + K(y,y) - g^T Lambda g,
    g_k = K(z_k, x) - K(z_k, y),
    Lambda = eta A^(1/2) (I + eta A^(1/2) K(z,z) A^(1/2))^(-1) A^(1/2).

With a linear kernel this reproduces the input-space reshaped metric
exactly; with an RBF kernel it carves locally adaptive corridors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from .exceptions import NumericalError
from .geometry import DisplacementSet, _cholesky_with_jitter, _freeze
from .validation import as_float_vector, check_same_dim, check_square_symmetric

_PERMUTATION_TOL = 1e-12

# Clamp window for round-off negatives of kernel squared distances: values in
# (-1e-8, 0) clamp to 0, anything at or below -1e-8 (relative to the kernel
# scale) signals a broken Lambda.
_KERNEL_NEG_HARD = 1e-8


class LinearKernel:
    """K(x, y) = <x, y>."""

    name = "linear"

    def __call__(self, xs, ys) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
        return xs @ ys.T

    def diag(self, xs) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        return np.einsum("ij,ij->i", xs, xs)

    def get_params(self):
        return {}


class RBFKernel:
    """K(x, y) = exp(-lam * ||x - y||^2)."""

    name = "rbf"

    def __init__(self, lam: float):
        lam = float(lam)
        if not np.isfinite(lam) or lam <= 0:
            raise ValueError(f"RBF lam must be finite and > 0, got {lam}")
        self.lam = lam

    def __call__(self, xs, ys) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
        return np.exp(-self.lam * cdist(xs, ys, "sqeuclidean"))

    def diag(self, xs) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        return np.ones(xs.shape[0])

    def get_params(self):
        return {"lam": self.lam}


def kernel_from_name(name: str, lam: float | None = None):
    if name == "linear":
        return LinearKernel()
    if name == "rbf":
        if lam is None:
            raise ValueError("rbf kernel requires lam")
        return RBFKernel(lam)
    raise ValueError(f"unknown kernel {name!r}; choose 'linear' or 'rbf'")


def laplacian_from_coupling(d: DisplacementSet) -> np.ndarray:
    """Weighted Laplacian of the bipartite coupling graph.

    Block form [[diag(a), -g], [-g^T, diag(b)]] where a, b are the coupling
    marginals. Rows sum to zero and the matrix is PSD.
    """
    g = d.coupling
    m, n = g.shape
    a = g.sum(axis=1)
    b = g.sum(axis=0)
    out = np.zeros((m + n, m + n))
    out[:m, :m] = np.diag(a)
    out[m:, m:] = np.diag(b)
    out[:m, m:] = -g
    out[m:, :m] = -g.T
    return out


def _paired_uniform_root(a: np.ndarray) -> np.ndarray | None:
    """Closed-form root for A = c*[[I, -P], [-P^T, I]] with P a permutation.

    Such an A satisfies A^2 = 2cA, so sqrt(A) = sqrt(c/2) * (A / c). Returns
    None when A does not have this shape.
    """
    size = a.shape[0]
    if size % 2 != 0:
        return None
    n = size // 2
    c = a[0, 0]
    if c <= 0:
        return None
    tol = _PERMUTATION_TOL * max(1.0, c)
    if np.abs(a[:n, :n] - c * np.eye(n)).max() > tol:
        return None
    if np.abs(a[n:, n:] - c * np.eye(n)).max() > tol:
        return None
    p = -a[:n, n:] / c
    near_one = np.abs(p - 1.0) <= _PERMUTATION_TOL
    near_zero = np.abs(p) <= _PERMUTATION_TOL
    if not np.all(near_one | near_zero):
        return None
    if not (np.all(near_one.sum(axis=0) == 1) and np.all(near_one.sum(axis=1) == 1)):
        return None
    return np.sqrt(c / 2.0) * (a / c)


def laplacian_sqrt(a) -> np.ndarray:
    """Symmetric PSD square root of a coupling Laplacian.

    Paired uniform couplings (coupling = permutation / N) hit a closed form
    (1/sqrt(2N)) * [[I, -P], [-P^T, I]]; anything else goes through an
    eigendecomposition with negative eigenvalues clamped to zero.
    """
    a = check_square_symmetric(a, "laplacian", tol=1e-10)
    closed = _paired_uniform_root(a)
    if closed is not None:
        return closed
    vals, vecs = scipy.linalg.eigh(a)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def kernel_trace(kernel, d: DisplacementSet) -> float:
    """Trace of the feature-space displacement second moment.

    Equals sum_kl gamma_kl * ||phi(x_k) - phi(y_l)||^2, evaluated through
    kernel calls; for the linear kernel it coincides with trace(Sigma).
    """
    kxx = kernel.diag(d.sources)
    kyy = kernel.diag(d.targets)
    kxy = kernel(d.sources, d.targets)
    g = d.coupling
    sq = kxx[:, None] - 2.0 * kxy + kyy[None, :]
    return float(np.sum(g * sq))


def eta_from_alpha_kernel(kernel, d: DisplacementSet, alpha: float) -> float:
    """Trace-normalized eta in feature space: alpha / trace of the
    feature-space second moment."""
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    t = kernel_trace(kernel, d)
    if t < 1e-15:
        return 0.0
    return float(alpha) / t


@dataclass(frozen=True)
class KernelizedMetric:
    """The reshaped ground metric realized in an RKHS.

    ``anchors`` stacks the displacement sources then targets. An empty
    anchor set (``anchors`` with zero rows) encodes the unguided metric,
    i.e. plain feature-space Euclidean distance.

    The general non-permutation coupling branch follows the same algebra but
    is exercised far less in practice; treat it as experimental.
    """

    kernel: object
    anchors: np.ndarray
    laplacian_sqrt: np.ndarray
    lambda_matrix: np.ndarray
    eta: float
    gram_zz: np.ndarray

    name = "kernelized"

    def __post_init__(self):
        object.__setattr__(self, "anchors", _freeze(self.anchors))
        object.__setattr__(self, "laplacian_sqrt", _freeze(self.laplacian_sqrt))
        object.__setattr__(self, "lambda_matrix", _freeze(self.lambda_matrix))
        object.__setattr__(self, "gram_zz", _freeze(self.gram_zz))

    @property
    def n_anchors(self) -> int:
        return self.anchors.shape[0]

    def check_dim(self, d: int) -> None:
        if self.n_anchors:
            check_same_dim(self.anchors.shape[1], d, "metric anchors/points")

    def distance(self, x, y) -> float:
        """Kernel-space distance via the anchor difference vector g."""
        xv = as_float_vector(x, "x")
        yv = as_float_vector(y, "y")
        check_same_dim(xv.shape[0], yv.shape[0], "distance arguments")
        self.check_dim(xv.shape[0])
        xr = xv.reshape(1, -1)
        yr = yv.reshape(1, -1)
        base = float(self.kernel.diag(xr)[0] - 2.0 * self.kernel(xr, yr)[0, 0] + self.kernel.diag(yr)[0])
        if self.n_anchors:
            gvec = (self.kernel(self.anchors, xr) - self.kernel(self.anchors, yr)).ravel()
            sq = base - float(gvec @ self.lambda_matrix @ gvec)
        else:
            sq = base
        return np.sqrt(_clamp_kernel_sq(sq, scale=max(1.0, abs(base))))

    def pairwise_sq(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Batched squared distances, reusing K(z, .) rows across the grid."""
        base = (
            self.kernel.diag(xs)[:, None]
            - 2.0 * self.kernel(xs, ys)
            + self.kernel.diag(ys)[None, :]
        )
        if not self.n_anchors:
            return base
        kxz = self.kernel(xs, self.anchors)
        kyz = self.kernel(ys, self.anchors)
        lam_kyz = kyz @ self.lambda_matrix
        qx = np.einsum("ij,jk,ik->i", kxz, self.lambda_matrix, kxz)
        qy = np.einsum("ij,ij->i", lam_kyz, kyz)
        cross = kxz @ lam_kyz.T
        return base - (qx[:, None] + qy[None, :] - 2.0 * cross)


def unguided_kernel_metric(kernel, dim: int) -> KernelizedMetric:
    """Feature-space Euclidean metric (no displacement guidance)."""
    empty = np.zeros((0, dim))
    zero = np.zeros((0, 0))
    return KernelizedMetric(
        kernel=kernel,
        anchors=empty,
        laplacian_sqrt=zero,
        lambda_matrix=zero,
        eta=0.0,
        gram_zz=zero,
    )


def build_kernelized_metric(kernel, d: DisplacementSet, eta: float) -> KernelizedMetric:
    """Assemble anchors, the anchor Gram matrix, A^(1/2) and Lambda."""
    if eta < 0:
        raise ValueError(f"eta must be nonnegative, got {eta}")
    z = np.vstack([d.sources, d.targets])
    gram = kernel(z, z)
    gram = (gram + gram.T) / 2.0
    root = laplacian_sqrt(laplacian_from_coupling(d))
    k = z.shape[0]
    if eta == 0.0:
        lam = np.zeros((k, k))
    else:
        core = np.eye(k) + eta * (root @ gram @ root)
        core = (core + core.T) / 2.0
        upper = _cholesky_with_jitter(core, lower=False)
        inv = scipy.linalg.cho_solve((upper, False), np.eye(k))
        lam = eta * (root @ ((inv + inv.T) / 2.0) @ root)
        lam = (lam + lam.T) / 2.0
    return KernelizedMetric(
        kernel=kernel,
        anchors=z,
        laplacian_sqrt=root,
        lambda_matrix=lam,
        eta=float(eta),
        gram_zz=gram,
    )


def kernel_distance(m: KernelizedMetric, x, y) -> float:
    return m.distance(x, y)


def _clamp_kernel_sq(value: float, scale: float) -> float:
    if value >= 0.0:
        return value
    if value >= -_KERNEL_NEG_HARD * scale:
        return 0.0
    raise NumericalError(
        f"kernel squared distance {value!r} is negative beyond round-off"
    )
