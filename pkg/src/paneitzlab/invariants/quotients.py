"""Yamabe-type quotients and their minimization over the symmetric function class.

Every quotient here is N(u) / ||u||_s^2 with N a quadratic form, so minimization
runs on the unit sphere of the L^s norm: each step takes a preconditioned gradient
direction, backtracks until the Armijo condition holds, and renormalizes. The
positive-class invariants parametrize u = exp(phi) so iterates stay positive.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import numpy.typing as npt
from scipy import linalg

from paneitzlab.bus.metrics import get_metrics_collector
from paneitzlab.errors import InfeasibleStartError
from paneitzlab.geometry.metric import ConformalMetric
from paneitzlab.operators.paneitz import paneitz_energy

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

BARRIER_EPSILON = 1e-6
YAMABE_FLOOR = 1e-6


@dataclass
class DescentConfig:
    max_iters: int = 2000
    tol: float = 1e-10
    armijo: float = 1e-4
    min_step: float = 1e-12
    perturbation: float = 1e-2
    perturbation_mode: int = 2
    barrier_weight: float = 1e-3
    barrier_reduction: float = 1e-3


@dataclass
class QuotientReport:
    name: str
    value: float
    minimizer: Array
    iterations: int
    converged: bool
    constraint_active: bool = False
    history: List[float] = field(default_factory=list)


@dataclass
class InvariantChain:
    yamabe: QuotientReport
    y4: QuotientReport
    y4_plus: QuotientReport
    y4_star: Optional[QuotientReport]

    def ordering_slack(self) -> float:
        """Largest violation of Y4 <= Y4+ <= Y4* (zero or negative when ordered)."""
        slack = self.y4.value - self.y4_plus.value
        if self.y4_star is not None:
            slack = max(slack, self.y4_plus.value - self.y4_star.value)
        return slack


def yamabe_exponent(n: int) -> float:
    return 2.0 * n / (n - 2)


def paneitz_exponent(n: int) -> float:
    return 2.0 * n / (n - 4)


def yamabe_form(metric: ConformalMetric) -> Array:
    """Symmetric K with u^T K u = int (4(n-1)/(n-2)) |grad u|^2 + R u^2."""
    return metric.conformal_laplacian_form


def paneitz_form(metric: ConformalMetric) -> Array:
    """Symmetric K with u^T K u equal to the expanded Paneitz energy."""
    return metric.paneitz_form


def _lp_power(metric: ConformalMetric, u: Array, s: float) -> float:
    return metric.integrate(np.abs(u) ** s)


def _check_nonzero(u: npt.ArrayLike) -> Array:
    values = np.asarray(u, dtype=float)
    if not np.any(values):
        raise ValueError("quotient of the zero function is undefined")
    return values


def yamabe_quotient(metric: ConformalMetric, u: npt.ArrayLike) -> float:
    """int (4(n-1)/(n-2)|grad u|^2 + R u^2) / ||u||^2_{L^{2n/(n-2)}}."""
    values = _check_nonzero(u)
    n = metric.n
    s = yamabe_exponent(n)
    numerator = metric.integrate(
        (4.0 * (n - 1) / (n - 2)) * metric.grad_sq(values) + metric.fields.Rt * values**2
    )
    return numerator / _lp_power(metric, values, s) ** (2.0 / s)


def y4_quotient(metric: ConformalMetric, u: npt.ArrayLike) -> float:
    """E(u) / ||u||^2_{L^{2n/(n-4)}}."""
    values = _check_nonzero(u)
    s = paneitz_exponent(metric.n)
    return paneitz_energy(metric, values) / _lp_power(metric, values, s) ** (2.0 / s)


class _Barrier:
    """-mu/V int log(m(u) - eps) for the scalar positivity margin m."""

    def __init__(self, metric: ConformalMetric, mu: float, epsilon: float):
        self.metric = metric
        self.mu = mu
        self.epsilon = epsilon
        self.volume = metric.volume

    def margin(self, u: Array) -> Array:
        m = self.metric
        return (
            -m.laplacian(u)
            - (2.0 / (m.n - 4)) * m.grad_sq(u) / u
            + 0.5 * (m.n - 4) * m.fields.Jt * u
        )

    def value(self, u: Array) -> float:
        gap = self.margin(u) - self.epsilon
        if np.any(u <= 0.0) or np.any(gap <= 0.0):
            return math.inf
        return -self.mu * self.metric.integrate(np.log(gap)) / self.volume

    def gradient(self, u: Array) -> Array:
        m = self.metric
        n = m.n
        c1 = 2.0 / (n - 4)
        G = m.gradient_matrix
        du = G @ u
        jacobian = (
            -m.laplacian_matrix
            - c1 * (2.0 * (du / u)[:, None] * G - np.diag(du**2 / u**2))
            + np.diag(0.5 * (n - 4) * m.fields.Jt)
        )
        gap = self.margin(u) - self.epsilon
        return -(self.mu / self.volume) * jacobian.T @ (m.weights / gap)


def _descend(
    name: str,
    metric: ConformalMetric,
    K: Array,
    s: float,
    u0: Array,
    config: DescentConfig,
    positive: bool = False,
    barrier: Optional[_Barrier] = None,
) -> Tuple[Array, int, bool, List[float]]:
    w = metric.weights

    def normalize(u: Array) -> Array:
        return u / float(np.dot(w, np.abs(u) ** s)) ** (1.0 / s)

    def objective(u: Array) -> float:
        value = float(u @ K @ u)
        if barrier is not None:
            value += barrier.value(u)
        return value

    def gradient(u: Array) -> Array:
        raw = 2.0 * K @ u
        if barrier is not None:
            raw = raw + barrier.gradient(u)
        dual = w * np.abs(u) ** (s - 2.0) * u
        return raw - float(raw @ u) * dual

    step_of: Callable[[Array, Array, float], Array]
    if positive:
        step_of = lambda u, d, t: normalize(u * np.exp(t * d / u))
    else:
        step_of = lambda u, d, t: normalize(u + t * d)

    lowest = float(linalg.eigh(K, np.diag(w), eigvals_only=True, subset_by_index=[0, 0])[0])
    shift = abs(lowest) + 1.0
    factor = linalg.lu_factor(K + shift * np.diag(w))

    u = normalize(u0)
    F = objective(u)
    if not math.isfinite(F):
        raise InfeasibleStartError(f"{name}: starting point violates the constraint")
    history = [F]
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iters + 1):
        g = gradient(u)
        d = -linalg.lu_solve(factor, g)
        slope = float(g @ d)
        if slope >= 0.0 or -slope <= config.tol * max(1.0, abs(F)):
            converged = True
            break
        t = 1.0
        candidate, F_new = u, F
        accepted = False
        while t >= config.min_step:
            candidate = step_of(u, d, t)
            F_new = objective(candidate)
            if F_new <= F + config.armijo * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            logger.warning(
                f"{name}: line search found no Armijo decrease after {iterations} "
                f"steps (slope {slope:.3e}, objective {F:.12g})"
            )
            break
        decrease = F - F_new
        u, F = candidate, F_new
        history.append(F)
        if decrease < config.tol * max(1.0, abs(F)):
            converged = True
            break
    logger.debug(f"{name}: {iterations} descent steps, objective {F:.12g}")
    return u, iterations, converged, history


def _initial_guess(metric: ConformalMetric, config: DescentConfig) -> Array:
    profile = metric.grid.mode_profile(config.perturbation_mode)
    return np.ones(metric.grid.resolution) + config.perturbation * profile


def minimize_yamabe(
    metric: ConformalMetric,
    config: Optional[DescentConfig] = None,
    start: Optional[Array] = None,
) -> QuotientReport:
    config = config or DescentConfig()
    u0 = _initial_guess(metric, config) if start is None else start
    u, iterations, converged, history = _descend(
        "Y", metric, yamabe_form(metric), yamabe_exponent(metric.n), u0, config
    )
    if u.sum() < 0:
        u = -u
    report = QuotientReport("Y", yamabe_quotient(metric, u), u, iterations, converged,
                            history=history)
    _log_report(metric, report)
    return report


def minimize_y4(
    metric: ConformalMetric,
    config: Optional[DescentConfig] = None,
    start: Optional[Array] = None,
) -> QuotientReport:
    config = config or DescentConfig()
    u0 = _initial_guess(metric, config) if start is None else start
    u, iterations, converged, history = _descend(
        "Y4", metric, paneitz_form(metric), paneitz_exponent(metric.n), u0, config
    )
    if u.sum() < 0:
        u = -u
    report = QuotientReport("Y4", y4_quotient(metric, u), u, iterations, converged,
                            history=history)
    _log_report(metric, report)
    return report


def estimate_y4_plus(
    metric: ConformalMetric,
    config: Optional[DescentConfig] = None,
    start: Optional[Array] = None,
) -> QuotientReport:
    """Y4 over positive functions, through u = exp(phi)."""
    config = config or DescentConfig()
    u0 = _initial_guess(metric, config) if start is None else np.abs(start)
    u, iterations, converged, history = _descend(
        "Y4+",
        metric,
        paneitz_form(metric),
        paneitz_exponent(metric.n),
        u0,
        config,
        positive=True,
    )
    report = QuotientReport("Y4+", y4_quotient(metric, u), u, iterations, converged,
                            history=history)
    _log_report(metric, report)
    return report


def estimate_y4_star(
    metric: ConformalMetric,
    config: Optional[DescentConfig] = None,
    yamabe: Optional[QuotientReport] = None,
) -> QuotientReport:
    """Y4 over positive factors whose conformal metric has R > 0.

    Requires Y(M, g) > 0. The open constraint is realized by a log barrier on the
    scalar positivity margin at level 1e-6, followed by one barrier reduction.
    """
    config = config or DescentConfig()
    yamabe = yamabe or minimize_yamabe(metric, config)
    if yamabe.value <= YAMABE_FLOOR:
        raise InfeasibleStartError(
            f"Y4* needs Y(M,g) > 0, estimated Y = {yamabe.value:.6g} on {metric.label}"
        )
    start = _feasible_start(metric, config, yamabe)

    K = paneitz_form(metric)
    s = paneitz_exponent(metric.n)
    scale = max(1.0, abs(float(start @ K @ start)) / float(
        np.dot(metric.weights, start**s)) ** (2.0 / s))
    mu = config.barrier_weight * scale
    total_iterations = 0
    converged = False
    history: List[float] = []
    u = start
    for _ in range(2):
        barrier = _Barrier(metric, mu, BARRIER_EPSILON)
        u, iterations, converged, steps = _descend(
            "Y4*", metric, K, s, u, config, positive=True, barrier=barrier
        )
        total_iterations += iterations
        history.extend(steps)
        mu *= config.barrier_reduction

    margin = _Barrier(metric, 0.0, BARRIER_EPSILON).margin(u)
    active = bool(margin.min() - BARRIER_EPSILON < 1e-3 * max(1.0, float(np.abs(margin).max())))
    report = QuotientReport(
        "Y4*", y4_quotient(metric, u), u, total_iterations, converged, active, history
    )
    _log_report(metric, report)
    return report


def _feasible_start(
    metric: ConformalMetric, config: DescentConfig, yamabe: QuotientReport
) -> Array:
    trial_barrier = _Barrier(metric, 0.0, BARRIER_EPSILON)
    s = paneitz_exponent(metric.n)

    def normalized(u: Array) -> Array:
        return u / metric.integrate(np.abs(u) ** s) ** (1.0 / s)

    ones = normalized(np.ones(metric.grid.resolution))
    if np.all(trial_barrier.margin(ones) > BARRIER_EPSILON):
        return ones
    y_min = np.abs(yamabe.minimizer)
    if np.all(y_min > 0.0):
        converted = normalized(y_min ** ((metric.n - 4.0) / (metric.n - 2.0)))
        if np.all(trial_barrier.margin(converted) > BARRIER_EPSILON):
            return converted
    raise InfeasibleStartError(
        f"no positive-scalar-curvature start found on {metric.label}"
    )


def estimate_invariant_chain(
    metric: ConformalMetric, config: Optional[DescentConfig] = None
) -> InvariantChain:
    """Y4*, then Y4+ warm-started at its minimizer, then Y4 warm-started at that."""
    config = config or DescentConfig()
    yamabe = minimize_yamabe(metric, config)
    y4_star: Optional[QuotientReport]
    try:
        y4_star = estimate_y4_star(metric, config, yamabe)
        plus_start: Optional[Array] = y4_star.minimizer
    except InfeasibleStartError as e:
        logger.warning(f"Y4* skipped: {e}")
        y4_star, plus_start = None, None
    y4_plus = estimate_y4_plus(metric, config, start=plus_start)
    y4 = minimize_y4(metric, config, start=y4_plus.minimizer)
    return InvariantChain(yamabe=yamabe, y4=y4, y4_plus=y4_plus, y4_star=y4_star)


def _log_report(metric: ConformalMetric, report: QuotientReport) -> None:
    get_metrics_collector().observe_histogram("descent_iterations", report.iterations)
    status = "converged" if report.converged else "did not converge"
    logger.info(
        f"{report.name} on {metric.label}: {report.value:.10g} "
        f"({status} after {report.iterations} steps)"
    )

