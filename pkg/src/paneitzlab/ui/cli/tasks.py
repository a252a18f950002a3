"""Task implementations behind ``RunTaskCommand``.

Each task takes a validated config and the (possibly perturbed) background
metric, and returns structured results plus named tolerance checks. Tasks run in
a worker thread; their events are handed back to the bus loop.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from paneitzlab import RunID
from paneitzlab.bus.bus import MessageBus
from paneitzlab.continuation.diagnostics import boundedness_proxy
from paneitzlab.continuation.solver import (
    assemble_H,
    geometric_residual,
    h_quadratic_forms,
    residual_norm,
    run_path,
    strong_residual,
)
from paneitzlab.errors import ContinuationError, PaneitzLabError, PreconditionError
from paneitzlab.geometry.conformal import (
    composition_residual,
    conformal_metric,
    perturbed_background,
    q_from_fields,
    scalar_margin_identity_residual,
    sigma2_conformal,
    total_q_identity_residual,
)
from paneitzlab.geometry.grid import make_grid
from paneitzlab.geometry.metric import ConformalMetric
from paneitzlab.invariants.quotients import (
    QuotientReport,
    estimate_invariant_chain,
    y4_quotient,
)
from paneitzlab.invariants.starter import (
    SUBCRITICAL_TOL,
    VERIFY_TOL,
    build_starter,
    subcritical_residual,
)
from paneitzlab.messages.commands import Command, CommandResult, RunTaskCommand
from paneitzlab.messages.events import (
    Event,
    QuotientConverged,
    TaskCompletedEvent,
    TaskStartedEvent,
)
from paneitzlab.operators.matrix import SYMMETRY_TOLERANCE
from paneitzlab.operators.paneitz import (
    assemble_paneitz,
    bochner_residual,
    conformal_covariance_residual,
    greens_sign_check,
    roundoff_floor,
)
from paneitzlab.ui.cli.config import ExperimentConfig
from paneitzlab.ui.cli.report import CheckResult, ErrorPayload, RunReport, check

logger = logging.getLogger(__name__)

Publisher = Callable[[Event], None]

IDENTITY_TOL = 1e-8
ROUTE_TOL = 1e-6
COVARIANCE_TOL = 1e-5
ORDERING_TOL = 1e-6
CONSTANT_VALUE_TOL = 1e-3
TEST_FUNCTIONS = 10
TEST_MODES = 8


@dataclass
class TaskOutcome:
    results: Dict[str, Any] = field(default_factory=dict)
    checks: List[CheckResult] = field(default_factory=list)


def _summary(values: np.ndarray) -> Dict[str, float]:
    return {"min": float(values.min()), "max": float(values.max())}


def _relative(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def _test_functions(metric: ConformalMetric, seed: int, count: int) -> List[np.ndarray]:
    """Seeded band-limited functions with decaying random coefficients."""
    rng = np.random.default_rng(seed)
    decay = 1.0 / (1.0 + np.arange(TEST_MODES)) ** 2
    return [metric.grid.synthesize(rng.standard_normal(TEST_MODES) * decay) for _ in range(count)]


def _positive_factor(metric: ConformalMetric, seed: int) -> np.ndarray:
    phi = _test_functions(metric, seed + 1, 1)[0]
    return np.exp(0.3 * phi / max(1e-12, float(np.max(np.abs(phi)))))


def build_metric(config: ExperimentConfig) -> ConformalMetric:
    spec = config.background_spec()
    grid = make_grid(spec, config.resolution)
    return perturbed_background(
        spec, grid, config.perturbation.amplitude, config.perturbation.mode
    )


def curvature_task(
    config: ExperimentConfig, metric: ConformalMetric, publish: Publisher
) -> TaskOutcome:
    u = config.factor.values(metric.grid)
    child = conformal_metric(metric, u)
    f = child.fields
    results = {
        "J": _summary(f.Jt),
        "absA2": _summary(f.absA2t),
        "sigma2": _summary(f.sigma2t),
        "Q": _summary(f.Qt),
        "R": _summary(f.Rt),
        "A_radial": _summary(f.A_radial),
        "A_blocks": [_summary(a) for a in f.A_blocks],
    }
    checks = [
        check(
            "q_routes_agree",
            "conformal_geometry: Q~ from P u equals -Delta~J~ - 2|A~|^2 + (n/2)J~^2",
            _relative(f.Qt, q_from_fields(child)),
            ROUTE_TOL,
        ),
        check(
            "sigma2_expansion_agrees",
            "conformal_geometry: sigma_2 expansion in u equals sigma_2 of A~",
            _relative(sigma2_conformal(metric, u), f.sigma2t),
            IDENTITY_TOL,
        ),
        check(
            "scalar_margin_identity",
            "conformal_geometry: J~ = (2/(n-4)) u^{-n/(n-4)} m(u)",
            scalar_margin_identity_residual(metric, u),
            IDENTITY_TOL,
        ),
        check(
            "total_q_identity",
            "conformal_geometry: int Q~ = 4 int sigma_2 + ((n-4)/2) int J~^2",
            total_q_identity_residual(metric, u),
            ROUTE_TOL,
        ),
    ]
    return TaskOutcome(results, checks)


def covariance_task(
    config: ExperimentConfig, metric: ConformalMetric, publish: Publisher
) -> TaskOutcome:
    rho = config.factor.values(metric.grid)
    phis = _test_functions(metric, config.seed, TEST_FUNCTIONS)
    covariance = max(conformal_covariance_residual(metric, rho, phi) for phi in phis)
    bochner = max(bochner_residual(metric, phi) for phi in phis)
    P = assemble_paneitz(metric.transform(rho))
    symmetry = max(P.symmetry_defect(a, b) for a, b in zip(phis[:-1], phis[1:]))
    green = greens_sign_check(assemble_paneitz(metric), 0)
    results = {
        "resolution": config.resolution,
        "covariance_residual": covariance,
        "roundoff_floor": roundoff_floor(config.resolution),
        "bochner_residual": bochner,
        "symmetry_defect": symmetry,
        "weighted_symmetry_defect": P.weighted_symmetry_defect,
        "greens_function": {
            "kernel_trivial": green.kernel_trivial,
            "positive": green.positive,
            "min_abs_eigenvalue": green.min_abs_eigenvalue,
            "green_minimum": green.green_minimum,
        },
    }
    checks = [
        check(
            "conformal_covariance",
            "paneitz_operator: P~ phi = rho^{-(n+4)/(n-4)} P(rho phi)",
            covariance,
            COVARIANCE_TOL,
        ),
        check(
            "bochner_identity",
            "paneitz_operator: int (Delta phi)^2 = int |D^2 phi|^2 + J|grad phi|^2 + (n-2) A(grad phi, grad phi)",
            bochner,
            ROUTE_TOL,
        ),
        check(
            "paneitz_self_adjoint",
            "paneitz_operator: <P~ f, h> = <f, P~ h> in the weighted inner product",
            symmetry,
            ROUTE_TOL,
        ),
        check(
            "paneitz_weighted_symmetric",
            "paneitz_operator: measured defect of P~ on the resolved basis",
            P.weighted_symmetry_defect,
            SYMMETRY_TOLERANCE,
        ),
    ]
    return TaskOutcome(results, checks)


def _quotient_results(report: Optional[QuotientReport]) -> Optional[Dict[str, Any]]:
    if report is None:
        return None
    return {
        "value": report.value,
        "iterations": report.iterations,
        "converged": report.converged,
        "constraint_active": report.constraint_active,
    }


def invariants_task(
    config: ExperimentConfig, metric: ConformalMetric, publish: Publisher
) -> TaskOutcome:
    chain = estimate_invariant_chain(metric)
    for report in (chain.yamabe, chain.y4_star, chain.y4_plus, chain.y4):
        if report is not None:
            publish(
                QuotientConverged(
                    name=report.name,
                    value=report.value,
                    iterations=report.iterations,
                    converged=report.converged,
                )
            )
    constant_value = y4_quotient(metric, np.ones(metric.grid.resolution))
    results = {
        "yamabe": _quotient_results(chain.yamabe),
        "y4": _quotient_results(chain.y4),
        "y4_plus": _quotient_results(chain.y4_plus),
        "y4_star": _quotient_results(chain.y4_star),
        "constant_function_value": constant_value,
        "ordering_slack": chain.ordering_slack(),
    }
    checks = [
        check(
            "invariant_ordering",
            "invariants: Y4 <= Y4+ <= Y4*",
            chain.ordering_slack(),
            ORDERING_TOL,
        )
    ]
    if config.background.kind == "round_sphere" and config.perturbation.amplitude == 0.0:
        estimates = [r for r in (chain.y4, chain.y4_plus, chain.y4_star) if r is not None]
        worst = max(abs(r.value - constant_value) / abs(constant_value) for r in estimates)
        checks.append(
            check(
                "sphere_constant_minimizer",
                "invariants: on the round sphere all three equal the constant-function value",
                worst,
                CONSTANT_VALUE_TOL,
            )
        )
    return TaskOutcome(results, checks)


def starter_task(
    config: ExperimentConfig, metric: ConformalMetric, publish: Publisher
) -> TaskOutcome:
    starter = build_starter(metric, config.p, config.delta)
    verification = starter.verification
    p = config.p if starter.p_used is None else starter.p_used
    if verification is None or p is None:
        raise PreconditionError("starter pipeline returned no verification")
    u2 = starter.u0.values ** ((metric.n - 2.0) / (metric.n - 4.0))
    sub_residual = subcritical_residual(metric, u2, p)
    exact = residual_norm(
        metric, strong_residual(metric, starter.u0.values, starter.lambda0, starter.chi)
    )
    results = {
        "p": p,
        "lambda0": starter.lambda0,
        "t0": starter.t0,
        "min_J_margin": starter.margins[0],
        "min_Q_minus_lambda_sigma2": starter.margins[1],
        "chi": _summary(starter.chi),
        "u0": _summary(starter.u0.values),
        "subcritical_residual": sub_residual,
        "verification_difference": verification.max_relative_difference,
        "verification_minimum": float(verification.lhs.min()),
        "residual_at_lambda0": exact,
    }
    checks = [
        check(
            "subcritical_converged",
            "invariants: L u = u^p solved",
            sub_residual,
            10.0 * SUBCRITICAL_TOL,
        ),
        check(
            "starter_routes_agree",
            "invariants: -Delta~J~ + ((n-4)/2)J~^2 from curvature equals its closed form",
            verification.max_relative_difference,
            VERIFY_TOL,
        ),
        check(
            "starter_positivity",
            "invariants: -Delta~J~ + ((n-4)/2)J~^2 > 0",
            float(verification.lhs.min()),
            0.0,
            "above",
        ),
        check(
            "starter_solves_path_equation",
            "continuation_solver: u0 solves the path equation at lambda_0",
            exact / (1.0 + float(np.max(np.abs(starter.chi)))),
            IDENTITY_TOL,
        ),
        check(
            "lambda0_positive",
            "invariants: 0 < lambda_0 <= 4 - delta",
            starter.lambda0,
            0.0,
            "above",
        ),
    ]
    return TaskOutcome(results, checks)


def continue_task(
    config: ExperimentConfig, metric: ConformalMetric, publish: Publisher
) -> TaskOutcome:
    starter = build_starter(metric, config.p, config.delta)
    path_config = config.path.path_config(config.q, config.alpha)
    states = run_path(metric, starter, path_config, listener=publish)
    records = [s.diagnostics for s in states if s.diagnostics is not None]
    final = states[-1].fields
    tol = path_config.tolerance(starter.chi, metric.grid.resolution)
    violations = 0
    for state in states:
        f = state.fields
        hypothesis = (f.Qt - state.lam * f.sigma2t).min() > 0.0 and f.Jt.min() > 0.0
        d = state.diagnostics
        if hypothesis and d is not None and not d.h_min_eig > 0.0:
            violations += 1
    proxy = boundedness_proxy(states)
    results = {
        "lambda0": starter.lambda0,
        "states": len(states),
        "final_lambda": states[-1].lam,
        "final_min_Q": float(final.Qt.min()),
        "final_min_R": float(final.Rt.min()),
        "newton_iterations": [s.newton_iterations for s in states],
        "max_residual_norm": max(s.residual_norm for s in states),
        "boundedness": proxy,
        "final_u": _summary(states[-1].u),
    }
    checks = [
        check("final_q_positive", "continuation_solver: min Q~ > 0 at lambda = 0",
              float(final.Qt.min()), 0.0, "above"),
        check("final_r_positive", "continuation_solver: min R~ > 0 at lambda = 0",
              float(final.Rt.min()), 0.0, "above"),
        check("reached_lambda_zero", "continuation_solver: path ends at lambda = 0",
              states[-1].lam, 0.0),
        check("residual_within_tolerance", "continuation_solver: residual_norm <= tol",
              max(s.residual_norm for s in states) / tol, 1.0),
        check("positivity_along_path",
              "continuation_solver: min u > 0 and J~-margin > 0 on accepted states",
              min(min(d.u_min, d.min_j_margin) for d in records), 0.0, "above"),
        check("total_q_identity_along_path",
              "conformal_geometry: total-Q identity on every accepted state",
              max(d.total_q_residual for d in records), ROUTE_TOL),
        check("path_identity_tested_by_one",
              "continuation_solver: integrated path identity against 1",
              max(d.identity_34_residual for d in records), ROUTE_TOL),
        check("path_identity_tested_by_power",
              "continuation_solver: integrated path identity against u^alpha",
              max(d.identity_37_residual for d in records), ROUTE_TOL),
        check("linearization_positive",
              "continuation_solver: hypotheses hold => H~ positive",
              violations, 0.0),
        check("boundedness_proxy",
              "continuation_solver: monitored norms bounded independently of lambda",
              sum(1 for ok in proxy.values() if not ok), 0.0),
    ]
    return TaskOutcome(results, checks)


def identities_task(
    config: ExperimentConfig, metric: ConformalMetric, publish: Publisher
) -> TaskOutcome:
    u = _positive_factor(metric, config.seed)
    v = _positive_factor(metric, config.seed + 7)
    phis = _test_functions(metric, config.seed, TEST_FUNCTIONS)
    lam, chi = 1.0, np.ones_like(u)
    strong = strong_residual(metric, u, lam, chi)
    geometric = geometric_residual(metric, u, lam, chi)
    triality = max(h_quadratic_forms(metric, u, lam, chi, phi).max_pairwise_difference
                   for phi in phis)
    H = assemble_H(metric, u, lam, chi)
    results = {
        "strong_vs_geometric": _relative(strong, geometric),
        "sigma2_expansion": _relative(
            sigma2_conformal(metric, u), metric.transform(u).fields.sigma2t
        ),
        "scalar_margin_identity": scalar_margin_identity_residual(metric, u),
        "total_q_identity": total_q_identity_residual(metric, u),
        "composition_law": composition_residual(metric, u, v),
        "bochner_identity": max(bochner_residual(metric, phi) for phi in phis),
        "quadratic_form_triality": triality,
        "h_symmetry_defect": max(H.symmetry_defect(a, b) for a, b in zip(phis[:-1], phis[1:])),
    }
    invariants = {
        "strong_vs_geometric": ("continuation_solver: strong and geometric residuals agree", ROUTE_TOL),
        "sigma2_expansion": ("conformal_geometry: sigma_2 expansion in u equals sigma_2 of A~", IDENTITY_TOL),
        "scalar_margin_identity": ("conformal_geometry: J~ = (2/(n-4)) u^{-n/(n-4)} m(u)", IDENTITY_TOL),
        "total_q_identity": ("conformal_geometry: int Q~ = 4 int sigma_2 + ((n-4)/2) int J~^2", ROUTE_TOL),
        "composition_law": ("conformal_geometry: transforming by u then v equals transforming by uv", ROUTE_TOL),
        "bochner_identity": ("paneitz_operator: integrated Bochner identity", ROUTE_TOL),
        "quadratic_form_triality": ("continuation_solver: three forms of <H~ phi, phi> agree", ROUTE_TOL),
        "h_symmetry_defect": ("continuation_solver: H~ is weighted-symmetric", ROUTE_TOL),
    }
    checks = [
        check(name, invariant, results[name], tolerance)
        for name, (invariant, tolerance) in invariants.items()
    ]
    return TaskOutcome(results, checks)


TASKS: Dict[str, Callable[[ExperimentConfig, ConformalMetric, Publisher], TaskOutcome]] = {
    "curvature": curvature_task,
    "covariance-test": covariance_task,
    "invariants": invariants_task,
    "starter": starter_task,
    "continue": continue_task,
    "identities": identities_task,
}


def execute_task(config: ExperimentConfig, publish: Publisher) -> TaskOutcome:
    metric = build_metric(config)
    return TASKS[config.task](config, metric, publish)


def _error_payload(error: PaneitzLabError) -> ErrorPayload:
    context: Dict[str, Any] = {}
    if isinstance(error, ContinuationError):
        context = {k: v for k, v in error.context.items() if isinstance(v, (int, float, str))}
        if error.state is not None:
            context["last_lambda"] = error.state.lam
    field_minimum = getattr(error, "field_minimum", None)
    if field_minimum is not None:
        context["field_minimum"] = field_minimum
    return ErrorPayload(type=type(error).__name__, message=str(error), context=context)


class TaskRunner:
    """Command handler: runs the task off the event loop and builds the report."""

    def __init__(self, bus: MessageBus):
        self.bus = bus

    async def handle(self, command: Command) -> CommandResult:
        if not isinstance(command, RunTaskCommand) or command.config is None:
            return CommandResult(success=False, error="RunTaskCommand without a config")
        config: ExperimentConfig = command.config
        run_id = command.run_id
        report = RunReport.start(config)
        thread_publish = self.bus.thread_publisher()

        def publish(event: Event) -> None:
            event.run_id = RunID(run_id)
            thread_publish(event)

        await self.bus.publish(
            TaskStartedEvent(
                task=config.task,
                background=config.background_spec().label,
                resolution=config.resolution,
                run_id=run_id,
            )
        )
        started = time.perf_counter()
        try:
            outcome = await self.bus.run_in_worker(execute_task, config, publish)
            report.results = outcome.results
            report.checks = outcome.checks
        except PaneitzLabError as e:
            logger.error(f"Task {config.task} failed: {type(e).__name__}: {e}")
            report.error = _error_payload(e)
        duration = time.perf_counter() - started
        if report.timing is not None:
            report.timing.duration_seconds = duration

        await self.bus.publish(
            TaskCompletedEvent(
                task=config.task,
                success=report.success,
                checks_passed=report.checks_passed,
                checks_total=len(report.checks),
                duration_seconds=duration,
                run_id=run_id,
            )
        )
        return CommandResult(
            success=report.success,
            command_id=command.command_id,
            result=report,
            error=None if report.error is None else f"{report.error.type}: {report.error.message}",
            run_id=run_id,
        )
