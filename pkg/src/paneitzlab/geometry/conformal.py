"""Curvature of conformal metrics g~ = u^{4/(n-4)} g and g~ = u^{4/(n-2)} g."""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Tuple

import numpy as np
import numpy.typing as npt

from paneitzlab.errors import InvalidBackgroundError
from paneitzlab.geometry.background import BackgroundManifold
from paneitzlab.geometry.grid import CollocationGrid
from paneitzlab.geometry.metric import (
    ConformalMetric,
    background_metric,
    check_positive,
)

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]


class ExponentConvention(Enum):
    FOURTH_ORDER = "fourth_order"
    SECOND_ORDER = "second_order"


@dataclass(frozen=True, eq=False)
class ConformalFactor:
    """Positive node values u with the convention g~ = u^{exponent} g."""

    values: Array
    convention: ExponentConvention
    n: int

    def __post_init__(self) -> None:
        check_positive(self.values)

    @classmethod
    def fourth_order(cls, values: npt.ArrayLike, n: int) -> "ConformalFactor":
        return cls(np.asarray(values, dtype=float), ExponentConvention.FOURTH_ORDER, n)

    @classmethod
    def second_order(cls, values: npt.ArrayLike, n: int) -> "ConformalFactor":
        return cls(np.asarray(values, dtype=float), ExponentConvention.SECOND_ORDER, n)

    @property
    def metric_exponent(self) -> float:
        if self.convention is ExponentConvention.FOURTH_ORDER:
            return 4.0 / (self.n - 4)
        return 4.0 / (self.n - 2)


class SchoutenComponents(NamedTuple):
    radial: Array
    blocks: Tuple[Array, ...]


class ScalarMargin(NamedTuple):
    margin: Array
    positive: bool


def _values(metric: ConformalMetric, u: "ConformalFactor | npt.ArrayLike") -> Array:
    if isinstance(u, ConformalFactor):
        if u.convention is not ExponentConvention.FOURTH_ORDER:
            u = convert_exponent(u)
        return u.values
    return check_positive(u)


def conformal_metric(
    metric: ConformalMetric,
    u: "ConformalFactor | npt.ArrayLike",
    label: Optional[str] = None,
) -> ConformalMetric:
    """The metric u^{4/(n-4)} g (second-order factors are converted first)."""
    return metric.transform(_values(metric, u), label=label)


def schouten_conformal(
    metric: ConformalMetric, u: "ConformalFactor | npt.ArrayLike"
) -> SchoutenComponents:
    """Eigenvalues of A~ (radial, then one per orbit block) in the metric g~."""
    fields = conformal_metric(metric, u).fields
    return SchoutenComponents(fields.A_radial, fields.A_blocks)


def sigma2_bracket(metric: ConformalMetric, u: Array) -> Array:
    """Bracket of the expansion sigma_2(A~) = u^{-8/(n-4)} [ ... ] in powers of u.

    All derivatives and contractions are taken in ``metric``.
    """
    n = metric.n
    c = 1.0 / (n - 4)
    base = metric.fields
    lap = metric.laplacian(u)
    hess = metric.hessian(u)
    grad_sq = metric.grad_sq(u)
    J = base.Jt
    return (
        base.sigma2t
        + 2 * c**2 * u**-2 * lap**2
        - 2 * c**2 * u**-2 * hess.norm_squared()
        + 4 * c**3 * u**-3 * grad_sq * lap
        + 4 * (n - 2) * c**3 * u**-3 * hess.radial * grad_sq
        - 2 * c * J * u**-1 * lap
        + 2 * c * u**-1 * base.contract(hess)
        - 2 * (n - 1) * c**3 * u**-4 * grad_sq**2
        - 2 * c**2 * J * u**-2 * grad_sq
        - 2 * (n - 2) * c**2 * u**-2 * base.A_radial * grad_sq
    )


def sigma2_conformal(metric: ConformalMetric, u: "ConformalFactor | npt.ArrayLike") -> Array:
    """sigma_2(A~) through the explicit expansion in u, Delta u, D^2 u, grad u."""
    values = _values(metric, u)
    return values ** (-8.0 / (metric.n - 4)) * sigma2_bracket(metric, values)


def q_conformal(metric: ConformalMetric, u: "ConformalFactor | npt.ArrayLike") -> Array:
    """Q~ = (2/(n-4)) u^{-(n+4)/(n-4)} P u."""
    values = _values(metric, u)
    n = metric.n
    return (2.0 / (n - 4)) * values ** (-(n + 4.0) / (n - 4)) * (
        metric.paneitz_matrix @ values
    )


def q_from_fields(metric: ConformalMetric) -> Array:
    """Q = -Delta J - 2|A|^2 + (n/2) J^2 evaluated directly in ``metric``."""
    f = metric.fields
    return -metric.laplacian(f.Jt) - 2.0 * f.absA2t + 0.5 * metric.n * f.Jt**2


def scalar_positivity_margin(
    metric: ConformalMetric, u: "ConformalFactor | npt.ArrayLike"
) -> ScalarMargin:
    """m = -Delta u - (2/(n-4)) u^-1 |grad u|^2 + ((n-4)/2) J u; J~ > 0 iff m > 0."""
    values = _values(metric, u)
    n = metric.n
    margin = (
        -metric.laplacian(values)
        - (2.0 / (n - 4)) * metric.grad_sq(values) / values
        + 0.5 * (n - 4) * metric.fields.Jt * values
    )
    return ScalarMargin(margin, bool(margin.min() > 0.0))


def scalar_margin_identity_residual(
    metric: ConformalMetric, u: "ConformalFactor | npt.ArrayLike"
) -> float:
    """Mismatch of J~ = (2/(n-4)) u^{-n/(n-4)} m(u), relative to max |J~|."""
    values = _values(metric, u)
    n = metric.n
    J_new = conformal_metric(metric, values).fields.Jt
    margin = scalar_positivity_margin(metric, values).margin
    predicted = (2.0 / (n - 4)) * values ** (-n / (n - 4.0)) * margin
    return float(np.max(np.abs(J_new - predicted)) / max(1.0, np.max(np.abs(J_new))))


def convert_exponent(u: ConformalFactor) -> ConformalFactor:
    """Re-express a second-order factor in the fourth-order convention."""
    if u.convention is ExponentConvention.FOURTH_ORDER:
        return u
    w = u.values ** ((u.n - 4.0) / (u.n - 2.0))
    return ConformalFactor.fourth_order(w, u.n)


def total_q_identity_residual(
    metric: ConformalMetric, u: "ConformalFactor | npt.ArrayLike"
) -> float:
    """|int Q~ - 4 int sigma_2(A~) - ((n-4)/2) int J~^2| / (1 + |int Q~|) over g~."""
    child = conformal_metric(metric, u)
    return total_q_residual(child)


def total_q_residual(metric: ConformalMetric) -> float:
    f = metric.fields
    total_q = metric.integrate(f.Qt)
    rhs = 4.0 * metric.integrate(f.sigma2t) + 0.5 * (metric.n - 4) * metric.integrate(
        f.Jt**2
    )
    return abs(total_q - rhs) / (1.0 + abs(total_q))


def composition_residual(metric: ConformalMetric, u: Array, v: Array) -> float:
    """Compare (u then v in g~) against the single factor u*v, over all fields."""
    chained = metric.transform(u).transform(v).fields
    direct = metric.transform(np.asarray(u) * np.asarray(v)).fields
    worst = 0.0
    for a, b in (
        (chained.Jt, direct.Jt),
        (chained.absA2t, direct.absA2t),
        (chained.sigma2t, direct.sigma2t),
        (chained.Qt, direct.Qt),
    ):
        worst = max(worst, float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b)))))
    return worst


def perturbed_background(
    spec: BackgroundManifold,
    grid: CollocationGrid,
    amplitude: float = 0.0,
    mode: int = 1,
) -> ConformalMetric:
    """Model metric, optionally conformally perturbed by 1 + amplitude * cos(mode theta)."""
    model = background_metric(spec, grid)
    if amplitude == 0.0:
        return model
    if not (0.0 <= amplitude < 1.0) or mode < 1:
        raise InvalidBackgroundError(
            f"perturbation needs 0 <= amplitude < 1 and mode >= 1, "
            f"got amplitude={amplitude}, mode={mode}"
        )
    rho = 1.0 + amplitude * grid.mode_profile(mode)
    logger.info(f"Perturbing {spec.label} by 1 + {amplitude:g} cos({mode} theta)")
    return model.transform(rho, label=f"{spec.label}+{amplitude:g}cos{mode}")
