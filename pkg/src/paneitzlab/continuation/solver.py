"""Newton continuation of Q~ - lambda sigma_2(A~) = chi u^{-(n+4)/(n-4)} from lambda_0 to 0.

The unknown is a fourth-order factor u over a fixed background metric g. Newton
steps are taken on the strong form

    P u - lambda u B[u] - ((n-4)/2) chi = 0,   B[u] = ((n-4)/2) u^{8/(n-4)} sigma_2(A~),

with the correction written as delta = u psi, where psi solves the linearized
operator H~ of the conformal metric g~ = u^{4/(n-4)} g.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np
import numpy.typing as npt
from scipy import linalg

from paneitzlab.bus.metrics import get_metrics_collector
from paneitzlab.continuation.diagnostics import check_q, diagnostics
from paneitzlab.continuation.state import ContinuationState, PathConfig
from paneitzlab.errors import (
    ContinuationError,
    DimensionError,
    LinearizationIndefinite,
    NonConvergence,
    PathStuck,
    PositivityLost,
    SingularLinearization,
)
from paneitzlab.geometry.conformal import scalar_positivity_margin, sigma2_bracket
from paneitzlab.geometry.metric import ConformalMetric, CurvatureFields, check_positive
from paneitzlab.invariants.starter import StarterMetric
from paneitzlab.messages.events import (
    Event,
    PathFinished,
    PathStateAccepted,
    PathStepRejected,
)
from paneitzlab.operators.matrix import OperatorMatrix
from paneitzlab.operators.paneitz import KERNEL_TOLERANCE

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

EventListener = Callable[[Event], None]


def _critical(n: int) -> float:
    return (n + 4.0) / (n - 4)


def check_dimension(n: int, lam: Optional[float] = None) -> None:
    """Positivity of H~ is only available for n >= 6."""
    if n >= 6:
        return
    if n == 5:
        lam = 4.0 if lam is None else lam
        coefficient = (13.0 - 4.0 * lam) / 3.0
        raise DimensionError(
            f"n=5 is not supported: the coefficient of int J|grad phi|^2 in the "
            f"Bochner form of H is (13 - 4 lambda)/3 = {coefficient:.4g} at "
            f"lambda={lam:g}, negative when lambda is close to 4"
        )
    raise DimensionError(f"n={n} is not supported, continuation needs n >= 6")


def bochner_coefficients(n: int, lam: float) -> Tuple[float, float, float, float]:
    """Coefficients of int (Delta phi)^2, |D^2 phi|^2, J|grad phi|^2, (Q - lambda sigma_2) phi^2."""
    return (
        (n - 6.0 + lam) / (n - 2),
        (4.0 - lam) / (n - 2),
        (4.0 - lam + (n - 2) * (n - 2 - lam)) / (n - 2),
        0.5 * (n - 4),
    )


def bracket(metric: ConformalMetric, u: Array) -> Array:
    """B[u] = ((n-4)/2) times the sigma_2 expansion bracket."""
    return 0.5 * (metric.n - 4) * sigma2_bracket(metric, u)


def strong_residual(
    metric: ConformalMetric, u: npt.ArrayLike, lam: float, chi: npt.ArrayLike
) -> Array:
    """P u - lambda u B[u] - ((n-4)/2) chi, all in the background metric."""
    values = check_positive(u)
    n = metric.n
    return (
        metric.paneitz_matrix @ values
        - lam * values * bracket(metric, values)
        - 0.5 * (n - 4) * np.asarray(chi, dtype=float)
    )


def geometric_residual(
    metric: ConformalMetric, u: npt.ArrayLike, lam: float, chi: npt.ArrayLike
) -> Array:
    """((n-4)/2) u^{(n+4)/(n-4)} (Q~ - lambda sigma_2(A~) - chi u^{-(n+4)/(n-4)})."""
    values = check_positive(u)
    n = metric.n
    crit = _critical(n)
    f = metric.transform(values).fields
    return (
        0.5
        * (n - 4)
        * values**crit
        * (f.Qt - lam * f.sigma2t - np.asarray(chi, dtype=float) * values ** (-crit))
    )


def residual_norm(metric: ConformalMetric, residual: npt.ArrayLike) -> float:
    """Root mean square of a node field over the background volume."""
    values = np.asarray(residual, dtype=float)
    return float(np.sqrt(metric.integrate(values**2) / metric.volume))


def _h_terms(
    child: ConformalMetric, u: Array, lam: float, chi: Array
) -> Tuple[Array, Array]:
    # lambda (J Delta - A^{ij} D_ij) = lambda div((J - A) grad) since div A = dJ
    n = child.n
    f = child.fields
    flux = (4.0 - lam) * f.A_radial - (n - 2 - lam) * f.Jt
    potential = -4.0 * (f.Qt - lam * f.sigma2t) + 0.5 * (n + 4) * chi * u ** (-_critical(n))
    return flux, potential


def _h_operator(child: ConformalMetric, u: Array, lam: float, chi: Array) -> OperatorMatrix:
    flux, potential = _h_terms(child, u, lam, chi)
    return OperatorMatrix(
        name="H",
        entries=child.fourth_order_matrix(flux, potential),
        weights=child.weights,
        metric_tag=child.label,
        dimension=child.n,
        form=child.fourth_order_form(flux, potential),
        basis=child.grid.resolved_basis,
    )


def assemble_H(
    metric: ConformalMetric, u: npt.ArrayLike, lam: float, chi: npt.ArrayLike
) -> OperatorMatrix:
    """H~ phi = P~ phi - ((n+4)/2) Q~ phi + lambda (J~ Delta~ phi - g~(A~, D~^2 phi)
    + 4 sigma_2(A~) phi) + ((n+4)/2) chi u^{-(n+4)/(n-4)} phi, in g~ = u^{4/(n-4)} g.
    """
    values = check_positive(u)
    child = metric.transform(values)
    return _h_operator(child, values, lam, np.asarray(chi, dtype=float))


@dataclass(frozen=True)
class HQuadraticForms:
    """<H~ phi, phi> three ways: assembled operator, integrand form, Bochner form."""

    operator: float
    expanded: float
    bochner: float

    @property
    def max_pairwise_difference(self) -> float:
        values = (self.operator, self.expanded, self.bochner)
        scale = max(1.0, *(abs(v) for v in values))
        return max(abs(a - b) for a in values for b in values) / scale


def h_quadratic_forms(
    metric: ConformalMetric,
    u: npt.ArrayLike,
    lam: float,
    chi: npt.ArrayLike,
    phi: npt.ArrayLike,
) -> HQuadraticForms:
    values = check_positive(u)
    chi = np.asarray(chi, dtype=float)
    test = np.asarray(phi, dtype=float)
    n = metric.n
    child = metric.transform(values)
    f = child.fields
    H = _h_operator(child, values, lam, chi)

    lap_sq = child.laplacian(test) ** 2
    grad_sq = child.grad_sq(test)
    hess_sq = child.hessian(test).norm_squared()
    potential = f.Qt - lam * f.sigma2t
    # off a solution chi u^{-crit} and Q~ - lambda sigma_2 differ
    correction = 0.5 * (n + 4) * (chi * values ** (-_critical(n)) - potential)

    expanded = child.integrate(
        lap_sq
        + (n - 2 - lam) * f.Jt * grad_sq
        - (4.0 - lam) * f.A_radial * grad_sq
        + (0.5 * (n - 4) * potential + correction) * test**2
    )
    a, b, c, d = bochner_coefficients(n, lam)
    bochner = child.integrate(
        a * lap_sq
        + b * hess_sq
        + c * f.Jt * grad_sq
        + (d * potential + correction) * test**2
    )
    return HQuadraticForms(H.quadratic_form(test), expanded, bochner)


class PositivityCheck(NamedTuple):
    min_eig: float
    hypothesis_ok: bool


def h_positivity_check(
    H: OperatorMatrix, fields: CurvatureFields, lam: float
) -> PositivityCheck:
    """Smallest Ritz value of H~ and whether Q~ - lambda sigma_2 > 0, J~ > 0 hold."""
    check_dimension(H.dimension, lam)
    hypothesis_ok = bool(
        (fields.Qt - lam * fields.sigma2t).min() > 0.0
        and fields.Jt.min() > 0.0
        and 0.0 <= lam <= 4.0
    )
    return PositivityCheck(float(H.eigenvalues[0]), hypothesis_ok)


class ContinuationSolver:
    """Newton corrector and adaptive lambda stepping for one fixed chi.

    ``listener`` receives a ``PathStateAccepted`` event per accepted state, a
    ``PathStepRejected`` per failed step and a ``PathFinished`` at lambda = 0.
    """

    def __init__(
        self,
        metric: ConformalMetric,
        chi: npt.ArrayLike,
        config: Optional[PathConfig] = None,
        listener: Optional[EventListener] = None,
    ):
        check_dimension(metric.n)
        self.metric = metric
        self.chi = np.asarray(chi, dtype=float)
        self.config = config or PathConfig()
        self.listener = listener
        self.tol = self.config.tolerance(self.chi, metric.grid.resolution)
        self.metrics = get_metrics_collector()
        check_q(metric.n, self.config.q)

    def _emit(self, event: Event) -> None:
        if self.listener is not None:
            self.listener(event)

    def _state(self, u: Array, lam: float, norm: float, iterations: int) -> ContinuationState:
        return ContinuationState(
            lam=lam,
            u=u,
            chi=self.chi,
            residual_norm=norm,
            metric=self.metric.transform(u, label=f"{self.metric.label}@{lam:.6g}"),
            newton_iterations=iterations,
        )

    def newton_correct(
        self,
        u: npt.ArrayLike,
        lam: float,
        max_iters: Optional[int] = None,
        tol: Optional[float] = None,
    ) -> ContinuationState:
        """Solve the path equation at ``lam`` starting from ``u``."""
        max_iters = self.config.max_newton_iters if max_iters is None else max_iters
        tol = self.tol if tol is None else tol
        metric = self.metric
        crit = _critical(metric.n)

        values = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(values)) or float(values.min()) <= 0.0:
            raise PositivityLost(
                f"trial factor is not positive at lambda={lam:g}",
                context={"lambda": lam, "u_min": float(np.nanmin(values))},
            )
        residual = strong_residual(metric, values, lam, self.chi)
        norm = residual_norm(metric, residual)
        if not np.isfinite(norm):
            raise NonConvergence(
                f"residual is not finite at lambda={lam:g}", context={"lambda": lam}
            )
        history = [norm]

        for iteration in range(max_iters + 1):
            if norm <= tol:
                logger.debug(
                    f"Newton at lambda={lam:.6g}: {iteration} iterations, "
                    f"residual {norm:.3e}"
                )
                return self._state(values, lam, norm, iteration)
            if iteration == max_iters:
                break

            H = assemble_H(metric, values, lam, self.chi)
            min_abs = float(np.min(np.abs(H.eigenvalues)))
            if min_abs <= KERNEL_TOLERANCE * H.norm:
                raise SingularLinearization(
                    f"H is singular at lambda={lam:g}, min |eig| = {min_abs:.3g}",
                    context={"lambda": lam, "min_abs_eig": min_abs},
                )
            psi = linalg.solve(H.entries, -values ** (-crit) * residual)
            delta = values * psi

            step = 1.0
            reason = "positivity"
            for _ in range(self.config.max_halvings + 1):
                trial = values + step * delta
                if trial.min() > 0.0 and scalar_positivity_margin(metric, trial).positive:
                    trial_residual = strong_residual(metric, trial, lam, self.chi)
                    trial_norm = residual_norm(metric, trial_residual)
                    if trial_norm < norm:
                        values, residual, norm = trial, trial_residual, trial_norm
                        break
                    reason = "residual"
                else:
                    reason = "positivity"
                step *= 0.5
            else:
                context = {"lambda": lam, "residual_history": history}
                if reason == "positivity":
                    raise PositivityLost(
                        f"every damped Newton step left the positive region at "
                        f"lambda={lam:g}",
                        context=context,
                    )
                raise NonConvergence(
                    f"no damped Newton step reduced the residual at lambda={lam:g} "
                    f"(residual {norm:.3e})",
                    context=context,
                )
            history.append(norm)
            logger.debug(f"Newton at lambda={lam:.6g}: step {step:g}, residual {norm:.3e}")

        raise NonConvergence(
            f"Newton did not reach {tol:.3e} in {max_iters} iterations at lambda={lam:g} "
            f"(residual {norm:.3e})",
            context={"lambda": lam, "residual_history": history},
        )

    def tangent(self, state: ContinuationState) -> Array:
        """du/dlambda at an accepted state, from H~ psi = u^{1-(n+4)/(n-4)} B[u]."""
        u = state.u
        H = assemble_H(self.metric, u, state.lam, self.chi)
        rhs = u ** (1.0 - _critical(self.metric.n)) * bracket(self.metric, u)
        return u * linalg.solve(H.entries, rhs)

    def _predict(self, state: ContinuationState, target: float) -> Array:
        if not self.config.use_predictor:
            return state.u
        try:
            guess = state.u + (target - state.lam) * self.tangent(state)
        except linalg.LinAlgError:
            return state.u
        if guess.min() <= 0.0 or not np.all(np.isfinite(guess)):
            return state.u
        return guess

    def _accept(self, state: ContinuationState, step: float) -> ContinuationState:
        H = assemble_H(self.metric, state.u, state.lam, self.chi)
        check = h_positivity_check(H, state.fields, state.lam)
        state.diagnostics = diagnostics(
            self.metric, state, self.config.q, self.config.alpha, check.min_eig
        )
        if check.hypothesis_ok and check.min_eig <= 0.0:
            raise LinearizationIndefinite(
                f"H is not positive at lambda={state.lam:g} although Q~ - lambda "
                f"sigma_2 > 0 and J~ > 0 (min eig {check.min_eig:.3g})",
                state=state,
                context={"lambda": state.lam, "min_eig": check.min_eig},
            )
        self.metrics.inc_counter("path_states_accepted_total")
        self.metrics.observe_histogram("newton_iterations", state.newton_iterations)
        self.metrics.set_gauge("path_lambda", state.lam)
        self._emit(
            PathStateAccepted(
                row=state.csv_row(), newton_iterations=state.newton_iterations, step=step
            )
        )
        logger.info(
            f"Accepted lambda={state.lam:.6g} after {state.newton_iterations} Newton "
            f"iterations (residual {state.residual_norm:.3e}, min u {state.u.min():.4g})"
        )
        return state

    def run_path(self, u0: npt.ArrayLike, lambda0: float) -> List[ContinuationState]:
        """March lambda from ``lambda0`` down to exactly 0."""
        check_dimension(self.metric.n, lambda0)
        config = self.config
        state = self._accept(self.newton_correct(u0, lambda0), 0.0)
        states = [state]
        step = config.initial_step_fraction * lambda0
        successes = 0
        while state.lam > 0.0:
            target = max(0.0, state.lam - step)
            try:
                trial = self.newton_correct(self._predict(state, target), target)
            except (NonConvergence, PositivityLost, SingularLinearization) as e:
                step *= 0.5
                successes = 0
                self.metrics.inc_counter("path_steps_rejected_total")
                self._emit(
                    PathStepRejected(
                        lam_from=state.lam, lam_to=target, reason=str(e), next_step=step
                    )
                )
                logger.debug(f"Step {state.lam:.6g} -> {target:.6g} rejected: {e}")
                if step < config.min_step:
                    raise PathStuck(
                        f"step fell below {config.min_step:g} at lambda={state.lam:g}",
                        state=state,
                        context={"lambda": state.lam, "last_error": str(e)},
                    ) from e
                continue
            state = self._accept(trial, state.lam - target)
            states.append(state)
            successes += 1
            if successes >= config.growth_after:
                step *= 2.0
                successes = 0

        final = state.fields
        min_q, min_r = float(final.Qt.min()), float(final.Rt.min())
        if min_q <= 0.0 or min_r <= 0.0:
            logger.warning(f"Path ended with min Q~={min_q:.6g}, min R~={min_r:.6g}")
        self._emit(
            PathFinished(states=len(states), final_lambda=state.lam, min_q=min_q, min_r=min_r)
        )
        logger.info(
            f"Path on {self.metric.label} reached lambda=0 in {len(states)} states "
            f"(min Q~={min_q:.6g}, min R~={min_r:.6g})"
        )
        return states


def newton_correct(
    state: ContinuationState,
    max_iters: Optional[int] = None,
    tol: Optional[float] = None,
    config: Optional[PathConfig] = None,
) -> ContinuationState:
    """Re-solve at ``state.lam`` from ``state.u`` over the state's background metric."""
    background = state.metric.parent
    if background is None:
        raise ContinuationError("state metric has no background parent", state=state)
    solver = ContinuationSolver(background, state.chi, config)
    return solver.newton_correct(state.u, state.lam, max_iters, tol)


def run_path(
    metric: ConformalMetric,
    starter: StarterMetric,
    config: Optional[PathConfig] = None,
    listener: Optional[EventListener] = None,
) -> List[ContinuationState]:
    solver = ContinuationSolver(metric, starter.chi, config, listener)
    return solver.run_path(starter.u0.values, starter.lambda0)
