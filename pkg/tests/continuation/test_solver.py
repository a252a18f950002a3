"""Tests for the path residuals, the linearized operator and the Newton continuation."""

import numpy as np
import pytest

from paneitzlab.bus.metrics import get_metrics_collector
from paneitzlab.continuation.solver import (
    ContinuationSolver,
    assemble_H,
    bochner_coefficients,
    check_dimension,
    geometric_residual,
    h_positivity_check,
    h_quadratic_forms,
    newton_correct,
    residual_norm,
    strong_residual,
)
from paneitzlab.continuation.state import PathConfig
from paneitzlab.errors import (
    DimensionError,
    NonConvergence,
    NonPositiveFactorError,
    PathStuck,
    PositivityLost,
    WindowError,
)
from paneitzlab.geometry.background import RoundSphere
from paneitzlab.geometry.grid import make_grid
from paneitzlab.geometry.metric import background_metric
from paneitzlab.messages.events import PathFinished, PathStateAccepted, PathStepRejected

LAMBDA0 = 3.875
# Q - lambda_0 sigma_2 on the round S^6
CHI0 = 24.0 - LAMBDA0 * 3.75


def _relative(a, b):
    return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b))))


class TestDimension:
    """Dimension restrictions."""

    def test_six_and_above_accepted(self):
        check_dimension(6)
        check_dimension(9, 3.9)

    def test_five_names_the_failing_coefficient(self):
        with pytest.raises(DimensionError, match=r"\(13 - 4 lambda\)/3 = -0.8333"):
            check_dimension(5, LAMBDA0)

    def test_lower_dimensions(self):
        with pytest.raises(DimensionError, match="n >= 6"):
            check_dimension(4)

    def test_solver_rejects_five_dimensional_background(self):
        spec = RoundSphere(5)
        metric = background_metric(spec, make_grid(spec, 16))
        with pytest.raises(DimensionError):
            ContinuationSolver(metric, np.ones(16))

    @pytest.mark.parametrize(
        "lam,expected",
        [(0.0, (0.0, 1.0, 5.0, 1.0)), (4.0, (1.0, 0.0, 0.0, 1.0)), (2.0, (0.5, 0.5, 2.5, 1.0))],
    )
    def test_bochner_coefficients_in_dimension_six(self, lam, expected):
        assert bochner_coefficients(6, lam) == pytest.approx(expected)

    def test_n5_scalar_coefficient(self):
        assert bochner_coefficients(5, LAMBDA0)[2] == pytest.approx((13.0 - 4.0 * LAMBDA0) / 3.0)


class TestResiduals:
    """Strong and geometric forms of the path equation."""

    @pytest.mark.parametrize("metric_name", ["sphere6_metric", "perturbed_sphere6", "product24_metric"])
    def test_routes_agree(self, request, metric_name, smooth_factor):
        metric = request.getfixturevalue(metric_name)
        u = smooth_factor(metric, seed=31)
        chi = np.ones_like(u)
        for lam in (0.0, 1.0, LAMBDA0):
            strong = strong_residual(metric, u, lam, chi)
            geometric = geometric_residual(metric, u, lam, chi)
            assert _relative(strong, geometric) < 1e-9

    def test_constant_solution_on_sphere(self, sphere6_metric):
        ones = np.ones(sphere6_metric.grid.resolution)
        residual = strong_residual(sphere6_metric, ones, LAMBDA0, CHI0 * ones)
        assert residual_norm(sphere6_metric, residual) < 1e-8

    def test_residual_norm_is_rms(self, sphere6_metric):
        field = np.full(sphere6_metric.grid.resolution, 2.0)
        assert residual_norm(sphere6_metric, field) == pytest.approx(2.0)

    def test_non_positive_factor(self, sphere6_metric):
        u = -np.ones(sphere6_metric.grid.resolution)
        with pytest.raises(NonPositiveFactorError):
            strong_residual(sphere6_metric, u, 1.0, np.ones_like(u))


class TestLinearization:
    """The operator H~."""

    def test_constant_function_at_lambda_zero(self, sphere6_metric):
        """H 1 = 24 - 120 + 5 chi for u = 1 on S^6."""
        ones = np.ones(sphere6_metric.grid.resolution)
        H = assemble_H(sphere6_metric, ones, 0.0, 2.0 * ones)
        assert np.allclose(H.apply(ones), 24.0 - 120.0 + 10.0, atol=1e-7)

    def test_reduces_to_paneitz_at_a_lambda_zero_solution(self, sphere6_metric):
        ones = np.ones(sphere6_metric.grid.resolution)
        x = sphere6_metric.grid.coordinate
        H = assemble_H(sphere6_metric, ones, 0.0, 24.0 * ones)
        assert np.allclose(H.apply(x), 120.0 * x, atol=1e-6)

    def test_lowest_eigenvalue_on_constant_solution(self, sphere6_metric):
        """On u = 1 at lambda_0 the constant mode has eigenvalue 24 - 3.75 lambda_0 = chi."""
        ones = np.ones(sphere6_metric.grid.resolution)
        H = assemble_H(sphere6_metric, ones, LAMBDA0, CHI0 * ones)
        check = h_positivity_check(H, sphere6_metric.fields, LAMBDA0)
        assert check.hypothesis_ok
        assert check.min_eig == pytest.approx(CHI0, rel=1e-9)

    def test_lives_in_the_conformal_metric(self, perturbed_sphere6, smooth_factor):
        u = smooth_factor(perturbed_sphere6, seed=5)
        H = assemble_H(perturbed_sphere6, u, 1.0, np.ones_like(u))
        child = perturbed_sphere6.transform(u)
        assert np.allclose(H.weights, child.weights)
        assert H.weighted_symmetric

    def test_weighted_symmetry(self, perturbed_sphere6, smooth_factor, test_function):
        u = smooth_factor(perturbed_sphere6, seed=6)
        H = assemble_H(perturbed_sphere6, u, 2.0, np.ones_like(u))
        f = test_function(perturbed_sphere6, seed=1)
        h = test_function(perturbed_sphere6, seed=2)
        assert H.symmetry_defect(f, h) < 1e-7

    @pytest.mark.parametrize("lam", [0.0, 1.0, 2.5, LAMBDA0])
    def test_three_quadratic_forms_agree(self, perturbed_sphere6, smooth_factor, test_function, lam):
        u = smooth_factor(perturbed_sphere6, seed=7)
        chi = np.ones_like(u)
        for seed in range(3):
            phi = test_function(perturbed_sphere6, seed=seed)
            forms = h_quadratic_forms(perturbed_sphere6, u, lam, chi, phi)
            assert forms.max_pairwise_difference < 1e-7

    def test_positivity_check_refuses_dimension_five(self):
        spec = RoundSphere(5)
        metric = background_metric(spec, make_grid(spec, 16))
        ones = np.ones(16)
        H = assemble_H(metric, ones, 1.0, ones)
        with pytest.raises(DimensionError):
            h_positivity_check(H, metric.fields, 1.0)


class TestLinearizationSweep:
    """Seeded states on the path: where Q~ - lambda sigma_2 > 0 and J~ > 0, H~ is positive."""

    STATES = 20

    def test_no_violations(self, perturbed_sphere6, product24_metric, smooth_factor):
        rng = np.random.default_rng(2024)
        violations, covered = 0, 0
        for seed in range(self.STATES):
            metric = perturbed_sphere6 if seed % 2 == 0 else product24_metric
            u = smooth_factor(metric, seed=100 + seed)
            lam = float(rng.uniform(0.0, LAMBDA0))
            f = metric.transform(u).fields
            # u^{(n+4)/(n-4)} with n = 6
            chi = (f.Qt - lam * f.sigma2t) * u**5.0
            residual = strong_residual(metric, u, lam, chi)
            assert residual_norm(metric, residual) / (1.0 + np.max(np.abs(chi))) < 1e-8
            check = h_positivity_check(assemble_H(metric, u, lam, chi), f, lam)
            if check.hypothesis_ok:
                covered += 1
                if not check.min_eig > 0.0:
                    violations += 1
        assert violations == 0
        assert covered >= self.STATES // 2


class TestNewton:
    """The Newton corrector."""

    def test_starter_needs_no_steps(self, sphere6_metric):
        ones = np.ones(sphere6_metric.grid.resolution)
        solver = ContinuationSolver(sphere6_metric, CHI0 * ones)
        state = solver.newton_correct(ones, LAMBDA0)
        assert state.newton_iterations == 0
        assert state.residual_norm <= solver.tol
        assert state.metric.parent is sphere6_metric

    def test_converges_to_constant_solution(self, sphere6_metric):
        ones = np.ones(sphere6_metric.grid.resolution)
        solver = ContinuationSolver(sphere6_metric, CHI0 * ones)
        state = solver.newton_correct(0.5 * ones, 1.0)
        # (24 - 3.75 lambda) u = chi on constants
        assert np.allclose(state.u, CHI0 / (24.0 - 3.75), rtol=1e-7)
        assert 0 < state.newton_iterations <= 8

    def test_non_positive_start(self, sphere6_metric):
        ones = np.ones(sphere6_metric.grid.resolution)
        solver = ContinuationSolver(sphere6_metric, CHI0 * ones)
        u = ones.copy()
        u[0] = -1.0
        with pytest.raises(PositivityLost):
            solver.newton_correct(u, LAMBDA0)

    def test_iteration_limit(self, sphere6_metric):
        ones = np.ones(sphere6_metric.grid.resolution)
        solver = ContinuationSolver(sphere6_metric, CHI0 * ones)
        with pytest.raises(NonConvergence) as info:
            solver.newton_correct(2.0 * ones, LAMBDA0, max_iters=0)
        assert info.value.context["residual_history"]

    def test_resolve_from_state(self, sphere6_metric):
        ones = np.ones(sphere6_metric.grid.resolution)
        solver = ContinuationSolver(sphere6_metric, CHI0 * ones)
        state = solver.newton_correct(0.6 * ones, 2.0)
        again = newton_correct(state)
        assert again.newton_iterations == 0
        assert np.array_equal(again.u, state.u)

    def test_q_window_checked(self, sphere6_metric):
        ones = np.ones(sphere6_metric.grid.resolution)
        with pytest.raises(WindowError, match="q="):
            ContinuationSolver(sphere6_metric, ones, PathConfig(q=0.5))

    def test_tangent_on_constant_path(self, sphere6_metric):
        """u(lambda) = chi / (24 - 3.75 lambda), so u' = 3.75 u / (24 - 3.75 lambda)."""
        ones = np.ones(sphere6_metric.grid.resolution)
        solver = ContinuationSolver(sphere6_metric, CHI0 * ones)
        state = solver.newton_correct(ones, LAMBDA0)
        expected = 3.75 / (24.0 - 3.75 * LAMBDA0)
        assert np.allclose(solver.tangent(state), expected, rtol=1e-8)


class TestRunPath:
    """Adaptive stepping from lambda_0 to 0."""

    def test_constant_path_on_round_sphere(self, sphere6_metric):
        ones = np.ones(sphere6_metric.grid.resolution)
        events = []
        solver = ContinuationSolver(sphere6_metric, CHI0 * ones, listener=events.append)
        states = solver.run_path(ones, LAMBDA0)

        lams = [s.lam for s in states]
        assert lams[0] == LAMBDA0
        assert lams[-1] == 0.0
        assert all(a > b for a, b in zip(lams, lams[1:]))
        assert np.allclose(states[-1].u, CHI0 / 24.0, rtol=1e-7)
        assert all(s.residual_norm <= solver.tol for s in states)
        assert all(s.diagnostics.h_min_eig > 0 for s in states)

        accepted = [e for e in events if isinstance(e, PathStateAccepted)]
        assert len(accepted) == len(states)
        assert accepted[-1].row["lambda"] == 0.0
        assert isinstance(events[-1], PathFinished)
        assert events[-1].min_q > 0 and events[-1].min_r > 0

        snapshot = get_metrics_collector().snapshot()
        assert snapshot["counters"]["path_states_accepted_total"] == len(states)
        assert snapshot["gauges"]["path_lambda"] == 0.0

    def test_step_floor_raises_path_stuck(self, sphere6_metric):
        class FailingSolver(ContinuationSolver):
            def newton_correct(self, u, lam, max_iters=None, tol=None):
                if lam < LAMBDA0:
                    raise NonConvergence(f"refused at lambda={lam:g}")
                return super().newton_correct(u, lam, max_iters, tol)

        ones = np.ones(sphere6_metric.grid.resolution)
        events = []
        config = PathConfig(initial_step_fraction=0.1, min_step=0.01)
        solver = FailingSolver(sphere6_metric, CHI0 * ones, config, events.append)
        with pytest.raises(PathStuck) as info:
            solver.run_path(ones, LAMBDA0)

        assert info.value.state is not None
        assert info.value.state.lam == LAMBDA0
        rejected = [e for e in events if isinstance(e, PathStepRejected)]
        # 0.3875 halves below 0.01 after six rejections
        assert len(rejected) == 6
        assert rejected[0].next_step == pytest.approx(0.19375)
        snapshot = get_metrics_collector().snapshot()
        assert snapshot["counters"]["path_steps_rejected_total"] == 6
