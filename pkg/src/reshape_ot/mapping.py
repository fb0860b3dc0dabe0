"""Barycentric transport maps induced by a coupling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solvers import Coupling
from .validation import as_float_matrix


@dataclass(frozen=True)
class BarycentricMap:
    """Row-normalized coupling average over the target points.

    Every source row of the coupling must carry positive mass; a zero-mass
    row means the marginals upstream were mis-specified, so it is an error
    rather than a silent skip.
    """

    coupling: Coupling
    targets: np.ndarray

    def __post_init__(self):
        tgt = as_float_matrix(self.targets, "targets")
        if self.coupling.plan.shape[1] != tgt.shape[0]:
            raise ValueError(
                f"coupling has {self.coupling.plan.shape[1]} target columns, "
                f"but {tgt.shape[0]} target points were given"
            )
        object.__setattr__(self, "targets", tgt)


def barycentric_transport(bmap: BarycentricMap) -> np.ndarray:
    """Predicted targets: weighted averages y_hat_k = sum_j g_kj y_j / sum_j g_kj."""
    plan = bmap.coupling.plan
    row_mass = plan.sum(axis=1)
    if np.any(row_mass <= 0):
        bad = int(np.argmin(row_mass))
        raise ValueError(f"source row {bad} of the coupling carries no mass")
    return (plan @ bmap.targets) / row_mass[:, None]


def transport_labels(bmap: BarycentricMap, source_labels) -> tuple[np.ndarray, np.ndarray]:
    """Move labeled source points to the target domain.

    Labels ride along unchanged; only positions move.
    """
    labels = np.asarray(source_labels)
    if labels.shape[0] != bmap.coupling.plan.shape[0]:
        raise ValueError(
            f"{labels.shape[0]} labels for {bmap.coupling.plan.shape[0]} source rows"
        )
    return barycentric_transport(bmap), labels.copy()
