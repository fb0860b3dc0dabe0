"""Discrete Kantorovich solvers over explicit cost matrices.

Two routes to a coupling: an exact linear-programming solver (with a
rectangular-assignment shortcut for uniform square problems) and entropic
Sinkhorn iterations, always run in the log domain so that small epsilon
never underflows.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
from scipy.optimize import linear_sum_assignment, linprog
from scipy.special import logsumexp

from .exceptions import NumericalError
from .geometry import PointCloud, cost_matrix
from .validation import check_marginal

MARGINAL_FEASIBILITY_TOL = 1e-7

SINKHORN_DEFAULT_MAX_ITERS = 10_000
SINKHORN_DEFAULT_MARGINAL_TOL = 1e-9


@dataclass(frozen=True)
class Coupling:
    """A transport plan with its marginals and cost objective."""

    plan: np.ndarray
    source_marginal: np.ndarray
    target_marginal: np.ndarray
    objective: float
    converged: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        plan = np.asarray(self.plan, dtype=np.float64)
        object.__setattr__(self, "plan", plan)
        object.__setattr__(
            self, "source_marginal", np.asarray(self.source_marginal, dtype=np.float64)
        )
        object.__setattr__(
            self, "target_marginal", np.asarray(self.target_marginal, dtype=np.float64)
        )

    @property
    def shape(self):
        return self.plan.shape

    def marginal_violation(self) -> float:
        row = np.abs(self.plan.sum(axis=1) - self.source_marginal).max()
        col = np.abs(self.plan.sum(axis=0) - self.target_marginal).max()
        return float(max(row, col))


@dataclass(frozen=True)
class SinkhornParams:
    epsilon: float
    max_iters: int = SINKHORN_DEFAULT_MAX_ITERS
    marginal_tol: float = SINKHORN_DEFAULT_MARGINAL_TOL

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if self.marginal_tol <= 0:
            raise ValueError("marginal_tol must be > 0")


def _check_cost(c) -> np.ndarray:
    arr = np.asarray(c, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"cost matrix must be 2-d, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("cost matrix contains non-finite entries")
    if np.any(arr < 0):
        raise ValueError("cost matrix has negative entries")
    return arr


def _is_uniform(w: np.ndarray) -> bool:
    return bool(np.abs(w - 1.0 / w.shape[0]).max() <= 1e-12)


def solve_exact(c, a, b) -> Coupling:
    """Minimize <coupling, C> over the transportation polytope.

    Uniform marginals with a square cost matrix reduce to an assignment
    problem (Jonker-Volgenant); everything else is solved as an LP with the
    HiGHS dual simplex, which returns a vertex plan.
    """
    c = _check_cost(c)
    n, m = c.shape
    a = check_marginal(a, n, "source weights")
    b = check_marginal(b, m, "target weights")

    if n == m and _is_uniform(a) and _is_uniform(b):
        rows, cols = linear_sum_assignment(c)
        plan = np.zeros((n, m))
        plan[rows, cols] = 1.0 / n
        objective = float(np.sum(plan * c))
        return Coupling(plan, a, b, objective, meta={"solver": "exact/assignment"})

    row_blocks = scipy.sparse.kron(scipy.sparse.eye(n), np.ones((1, m)), format="csr")
    col_blocks = scipy.sparse.kron(np.ones((1, n)), scipy.sparse.eye(m), format="csr")
    a_eq = scipy.sparse.vstack([row_blocks, col_blocks], format="csc")
    b_eq = np.concatenate([a, b])
    res = linprog(
        c.ravel(),
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs-ds",
    )
    if not res.success:
        raise NumericalError(f"exact OT solve failed: {res.message}")
    plan = res.x.reshape(n, m)
    plan = np.where(plan < 0.0, 0.0, plan)
    coupling = Coupling(
        plan, a, b, float(np.sum(plan * c)), meta={"solver": "exact/linprog"}
    )
    if coupling.marginal_violation() > MARGINAL_FEASIBILITY_TOL:
        raise NumericalError(
            f"exact plan violates marginals by {coupling.marginal_violation():.3e}"
        )
    return coupling


def solve_sinkhorn(c, a, b, params: SinkhornParams) -> Coupling:
    """Entropic OT by alternating log-domain scaling updates.

    Stops once the plan's worst marginal violation drops below
    ``params.marginal_tol``; hitting ``max_iters`` first flags the coupling
    as unconverged (a warning, not an error). NaN in the scalings is a hard
    error.
    """
    c = _check_cost(c)
    n, m = c.shape
    a = check_marginal(a, n, "source weights")
    b = check_marginal(b, m, "target weights")
    eps = params.epsilon

    with np.errstate(divide="ignore"):
        log_a = np.log(a)
        log_b = np.log(b)
    f = np.zeros(n)
    g = np.zeros(m)
    converged = False
    iterations = 0
    check_interval = 10
    for iterations in range(1, params.max_iters + 1):
        f = eps * (log_a - logsumexp((g[None, :] - c) / eps, axis=1))
        g = eps * (log_b - logsumexp((f[:, None] - c) / eps, axis=0))
        if iterations % check_interval and iterations != params.max_iters:
            continue
        if np.any(np.isnan(f)) or np.any(np.isnan(g)):
            raise NumericalError("NaN in Sinkhorn scalings")
        plan = np.exp((f[:, None] + g[None, :] - c) / eps)
        row_gap = np.abs(plan.sum(axis=1) - a).max()
        col_gap = np.abs(plan.sum(axis=0) - b).max()
        if max(row_gap, col_gap) <= params.marginal_tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"Sinkhorn did not reach marginal tolerance {params.marginal_tol} "
            f"within {params.max_iters} iterations",
            RuntimeWarning,
        )
    plan = np.exp((f[:, None] + g[None, :] - c) / eps)
    return Coupling(
        plan,
        a,
        b,
        float(np.sum(plan * c)),
        converged=converged,
        meta={"solver": "sinkhorn", "epsilon": eps, "iterations": iterations},
    )


def solve_pipeline(
    source: PointCloud,
    target: PointCloud,
    metric,
    solver="exact",
) -> Coupling:
    """Cost matrix from the metric, then the chosen solver.

    ``solver`` is either the string "exact" or a SinkhornParams instance.
    The coupling's meta records which metric and solver produced it.
    """
    costs = cost_matrix(metric, source, target)
    if solver == "exact":
        coupling = solve_exact(costs, source.weights, target.weights)
    elif isinstance(solver, SinkhornParams):
        coupling = solve_sinkhorn(costs, source.weights, target.weights, solver)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    meta = dict(coupling.meta)
    meta["metric"] = getattr(metric, "name", type(metric).__name__)
    return dataclasses.replace(coupling, meta=meta)
