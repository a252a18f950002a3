"""Snapshots along the continuity path and the knobs that drive it."""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
import numpy.typing as npt

from paneitzlab.geometry.metric import ConformalMetric, CurvatureFields

Array = npt.NDArray[np.float64]

CSV_COLUMNS = (
    "lambda",
    "residual_norm",
    "u_min",
    "u_critical_norm",
    "minJ_margin",
    "minQ",
    "v_sup",
    "h_min_eig",
    "identity_34_residual",
    "identity_37_residual",
)


@dataclass
class PathConfig:
    """Step control for ``run_path``.

    The first step is ``initial_step_fraction * lambda_0``; failed Newton solves
    halve the step, ``growth_after`` consecutive successes double it, and the
    path is abandoned once the step drops below ``min_step``. The Newton
    tolerance never drops below ``roundoff_factor * eps * N^2`` (relative), the
    level at which fourth-order node residuals stall on N nodes.
    """

    initial_step_fraction: float = 0.05
    min_step: float = 1e-4
    growth_after: int = 3
    max_newton_iters: int = 12
    max_halvings: int = 10
    tol_factor: float = 1e-9
    roundoff_factor: float = 100.0
    use_predictor: bool = True
    q: float = 0.8
    alpha: float = 2.0

    def tolerance(self, chi: Array, resolution: Optional[int] = None) -> float:
        factor = self.tol_factor
        if resolution is not None:
            floor = self.roundoff_factor * float(np.finfo(float).eps) * resolution**2
            factor = max(factor, floor)
        return factor * (1.0 + float(np.max(np.abs(chi))))


@dataclass(frozen=True, eq=False)
class DiagnosticsRecord:
    u_critical_norm: float
    u_min: float
    u_sup: float
    v_field: Array
    v_sup: float
    v_lower_margin: float
    min_j_margin: float
    identity_34_residual: float
    identity_37_residual: float
    total_q_residual: float
    h_min_eig: float = float("nan")


@dataclass(eq=False)
class ContinuationState:
    """Accepted (or trial) point (lambda, u) of the path, with its metric g~."""

    lam: float
    u: Array
    chi: Array
    residual_norm: float
    metric: ConformalMetric
    newton_iterations: int = 0
    diagnostics: Optional[DiagnosticsRecord] = None
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def fields(self) -> CurvatureFields:
        return self.metric.fields

    def csv_row(self) -> Dict[str, float]:
        d = self.diagnostics
        if d is None:
            raise ValueError("state has no diagnostics yet")
        return {
            "lambda": self.lam,
            "residual_norm": self.residual_norm,
            "u_min": d.u_min,
            "u_critical_norm": d.u_critical_norm,
            "minJ_margin": d.min_j_margin,
            "minQ": float(self.fields.Qt.min()),
            "v_sup": d.v_sup,
            "h_min_eig": d.h_min_eig,
            "identity_34_residual": d.identity_34_residual,
            "identity_37_residual": d.identity_37_residual,
        }
