"""Starting metric for the continuity path.

The pipeline solves the subcritical equation L u = u^p, checks that the metric
u^{4/(n-2)} g satisfies -Delta~ J~ + ((n-4)/2) J~^2 > 0 and J~ > 0, re-expresses it
as a fourth-order factor u0, and then picks lambda_0 close to 4 together with
chi = (Q~ - lambda_0 sigma_2(A~)) u0^{(n+4)/(n-4)}, which makes u0 an exact solution
of the path equation at lambda_0.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import numpy.typing as npt
from scipy import linalg

from paneitzlab.errors import NonConvergence, PreconditionError, WindowError
from paneitzlab.geometry.conformal import (
    ConformalFactor,
    ExponentConvention,
    convert_exponent,
)
from paneitzlab.geometry.metric import ConformalMetric
from paneitzlab.invariants.quotients import (
    YAMABE_FLOOR,
    QuotientReport,
    minimize_yamabe,
)
from paneitzlab.operators.paneitz import KERNEL_TOLERANCE, assemble_conformal_laplacian

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

LAMBDA_STEPS = 40
DEFAULT_DELTA = 0.125
SUBCRITICAL_TOL = 1e-9
SUBCRITICAL_ROUNDOFF = 1e3
VERIFY_TOL = 1e-6


def t_from_lambda(lam: float) -> float:
    """t = 4 / (4 - lambda), the original homotopy parameter."""
    return 4.0 / (4.0 - lam)


def lambda_from_t(t: float) -> float:
    return 4.0 * (t - 1.0) / t


def f_from_chi(chi: npt.ArrayLike, t: float) -> Array:
    return t * np.asarray(chi, dtype=float)


def p_window(n: int) -> Tuple[float, float]:
    """Open window for the subcritical exponent p."""
    return max(1.0, 6.0 / (n - 2)), (n + 2.0) / (n - 2)


def default_p(n: int) -> float:
    lower, upper = p_window(n)
    return 0.5 * (lower + upper)


def check_p(n: int, p: float) -> None:
    lower, upper = p_window(n)
    if not lower < p < upper:
        raise WindowError("p", p, lower, upper, n)


@dataclass(frozen=True, eq=False)
class StarterVerification:
    lhs: Array
    rhs: Array
    max_relative_difference: float
    agree: bool
    positive: bool


@dataclass(frozen=True, eq=False)
class StarterMetric:
    u0: ConformalFactor
    chi: Array
    lambda0: float
    margins: Tuple[float, float]
    p_used: Optional[float] = None
    verification: Optional[StarterVerification] = None

    @property
    def t0(self) -> float:
        return t_from_lambda(self.lambda0)


def subcritical_residual(metric: ConformalMetric, u: npt.ArrayLike, p: float) -> float:
    """||L u - u^p||_inf / ||u^p||_inf."""
    values = np.asarray(u, dtype=float)
    power = np.abs(values) ** p
    residual = metric.conformal_laplacian_matrix @ values - power
    return float(np.max(np.abs(residual)) / np.max(power))


def subcritical_tolerance(resolution: int) -> float:
    """SUBCRITICAL_TOL, floored at second-order roundoff on N nodes."""
    return max(SUBCRITICAL_TOL, SUBCRITICAL_ROUNDOFF * float(np.finfo(float).eps) * resolution**2)


def subcritical_starter(
    metric: ConformalMetric,
    p: Optional[float] = None,
    max_iters: int = 2000,
    yamabe: Optional[QuotientReport] = None,
) -> ConformalFactor:
    """Positive solution of L u = u^p by normalized fixed-point iteration.

    Iterates v = L^{-1}(u^p), u <- A v / ||v||_{L^{p+1}} with A fixed; a fixed
    point satisfies L u = c u^p, and c^{1/(p-1)} u solves the equation.
    """
    n = metric.n
    p = default_p(n) if p is None else p
    check_p(n, p)
    yamabe = yamabe or minimize_yamabe(metric)
    if yamabe.value <= YAMABE_FLOOR:
        raise PreconditionError(
            f"subcritical starter needs Y(M,g) > 0, got Y = {yamabe.value:.6g}",
            field_minimum=yamabe.value,
        )
    L = assemble_conformal_laplacian(metric)
    min_abs = float(np.min(np.abs(L.eigenvalues)))
    if min_abs <= KERNEL_TOLERANCE * L.norm:
        raise PreconditionError(
            f"conformal Laplacian is not invertible, min |eig| = {min_abs:.3g}",
            field_minimum=min_abs,
        )
    factor = linalg.lu_factor(L.entries)

    u = np.ones(metric.grid.resolution)
    amplitude = metric.lp_norm(u, p + 1.0)
    tolerance = subcritical_tolerance(metric.grid.resolution)
    residual = np.inf
    for iteration in range(1, max_iters + 1):
        v = linalg.lu_solve(factor, u**p)
        if v.min() <= 0.0:
            raise PreconditionError(
                "subcritical iteration lost positivity", field_minimum=float(v.min())
            )
        scale = amplitude / metric.lp_norm(v, p + 1.0)
        u = scale * v
        candidate = scale ** (1.0 / (p - 1.0)) * u
        residual = subcritical_residual(metric, candidate, p)
        if residual <= tolerance:
            logger.info(
                f"Subcritical solve on {metric.label} converged in {iteration} "
                f"iterations (p={p:g}, residual={residual:.3g})"
            )
            return ConformalFactor.second_order(candidate, n)
    raise NonConvergence(
        f"subcritical iteration did not converge in {max_iters} iterations",
        context={"residual": residual, "p": p},
    )


def verify_starter(
    metric: ConformalMetric, u: ConformalFactor, p: float
) -> StarterVerification:
    """-Delta~ J~ + ((n-4)/2) J~^2 for g~ = u^{4/(n-2)} g, computed two ways.

    (a) from the curvature of g~, with Delta~ phi = u^{-4/(n-2)} Delta phi
        + 2 u^{-(n+2)/(n-2)} g(grad u, grad phi);
    (b) from the closed form in powers of u, R and |grad u|^2 that holds when
        L u = u^p.
    """
    if u.convention is not ExponentConvention.SECOND_ORDER:
        raise ValueError("verify_starter expects a second-order factor")
    n = metric.n
    values = u.values
    child = metric.transform(convert_exponent(u).values)
    J = child.fields.Jt
    lap_J = values ** (-4.0 / (n - 2)) * metric.laplacian(J) + 2.0 * values ** (
        -(n + 2.0) / (n - 2)
    ) * metric.gradient(values) * metric.gradient(J)
    lhs = -lap_J + 0.5 * (n - 4) * J**2

    crit = (n + 2.0) / (n - 2)
    R = metric.fields.Rt
    rhs_R = (
        (n - 2) / (4.0 * (n - 1)) * (p - 6.0 / (n - 2)) * values ** (2 * p - 2 * crit)
        + (n - 2) / (4.0 * (n - 1)) * (crit - p) * R * values ** (p - (n + 6.0) / (n - 2))
        + (crit - p) * (p - 4.0 / (n - 2)) * values ** (p - (3 * n + 2.0) / (n - 2))
        * metric.grad_sq(values)
    )
    rhs = rhs_R / (2.0 * (n - 1))
    difference = float(np.max(np.abs(lhs - rhs)) / max(1e-300, np.max(np.abs(rhs))))
    return StarterVerification(
        lhs=lhs,
        rhs=rhs,
        max_relative_difference=difference,
        agree=difference <= VERIFY_TOL,
        positive=bool(lhs.min() > 0.0),
    )


def find_lambda0_chi(
    metric: ConformalMetric,
    u0: "ConformalFactor | npt.ArrayLike",
    delta: float = DEFAULT_DELTA,
) -> StarterMetric:
    """Largest lambda_0 <= 4 - delta with Q~ - lambda_0 sigma_2(A~) >= eps, and chi."""
    n = metric.n
    if isinstance(u0, ConformalFactor):
        u0 = convert_exponent(u0).values
    values = np.asarray(u0, dtype=float)
    child = metric.transform(values)
    f = child.fields

    J_min = float(f.Jt.min())
    if J_min <= 0.0:
        raise PreconditionError(
            f"starter needs J~ > 0, min J~ = {J_min:.6g}", field_minimum=J_min
        )
    bound = -child.laplacian(f.Jt) + 0.5 * (n - 4) * f.Jt**2
    if bound.min() <= 0.0:
        raise PreconditionError(
            f"starter needs -Delta~J~ + ((n-4)/2)J~^2 > 0, min = {bound.min():.6g}",
            field_minimum=float(bound.min()),
        )

    epsilon = 1e-3 * max(1.0, float(np.max(np.abs(f.Qt))))

    def margin(lam: float) -> float:
        return float((f.Qt - lam * f.sigma2t).min())

    cap = 4.0 - delta
    if margin(cap) >= epsilon:
        lambda0 = cap
    elif margin(0.0) >= epsilon:
        lo, hi = 0.0, cap
        for _ in range(LAMBDA_STEPS):
            mid = 0.5 * (lo + hi)
            if margin(mid) >= epsilon:
                lo = mid
            else:
                hi = mid
        lambda0 = lo
    else:
        raise PreconditionError(
            f"Q~ - lambda sigma_2(A~) >= {epsilon:.3g} fails for every lambda, "
            f"min Q~ = {f.Qt.min():.6g}",
            field_minimum=float(f.Qt.min()),
        )
    if lambda0 <= 0.0:
        raise PreconditionError(
            "no lambda_0 in (0, 4) keeps Q~ - lambda sigma_2(A~) positive",
            field_minimum=margin(0.0),
        )

    chi = (f.Qt - lambda0 * f.sigma2t) * values ** ((n + 4.0) / (n - 4))
    logger.info(
        f"lambda_0 = {lambda0:.6g} on {metric.label}, min chi = {chi.min():.6g}"
    )
    return StarterMetric(
        u0=ConformalFactor.fourth_order(values, n),
        chi=chi,
        lambda0=lambda0,
        margins=(J_min, margin(lambda0)),
    )


def build_starter(
    metric: ConformalMetric,
    p: Optional[float] = None,
    delta: float = DEFAULT_DELTA,
    yamabe: Optional[QuotientReport] = None,
) -> StarterMetric:
    """Subcritical solve, verification, exponent conversion and lambda_0 search."""
    p = default_p(metric.n) if p is None else p
    u = subcritical_starter(metric, p, yamabe=yamabe)
    verification = verify_starter(metric, u, p)
    if not (verification.agree and verification.positive):
        raise PreconditionError(
            f"starter verification failed: agree={verification.agree} "
            f"(rel. diff {verification.max_relative_difference:.3g}), "
            f"positive={verification.positive}",
            field_minimum=float(verification.lhs.min()),
        )
    starter = find_lambda0_chi(metric, convert_exponent(u), delta)
    return StarterMetric(
        u0=starter.u0,
        chi=starter.chi,
        lambda0=starter.lambda0,
        margins=starter.margins,
        p_used=p,
        verification=verification,
    )
