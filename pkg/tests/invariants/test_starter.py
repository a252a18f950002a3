"""Tests for the starting metric of the continuity path."""

import numpy as np
import pytest

from paneitzlab.continuation.solver import residual_norm, strong_residual
from paneitzlab.errors import PreconditionError, WindowError
from paneitzlab.geometry.conformal import ConformalFactor, ExponentConvention, perturbed_background
from paneitzlab.geometry.grid import make_grid
from paneitzlab.invariants.starter import (
    DEFAULT_DELTA,
    build_starter,
    check_p,
    default_p,
    f_from_chi,
    find_lambda0_chi,
    lambda_from_t,
    p_window,
    subcritical_residual,
    subcritical_starter,
    subcritical_tolerance,
    t_from_lambda,
    verify_starter,
)


class TestParameters:
    """Windows and parameter conversions."""

    def test_p_window(self):
        assert p_window(6) == pytest.approx((1.5, 2.0))
        assert p_window(10) == pytest.approx((1.0, 1.5))
        assert default_p(6) == pytest.approx(1.75)

    @pytest.mark.parametrize("p", [1.5, 2.0, 1.2, 3.0])
    def test_p_outside_window(self, p):
        with pytest.raises(WindowError, match=r"\(1\.5, 2\)") as info:
            check_p(6, p)
        assert info.value.lower == pytest.approx(1.5)
        assert info.value.upper == pytest.approx(2.0)

    def test_lambda_t_bridge(self):
        assert t_from_lambda(0.0) == pytest.approx(1.0)
        assert t_from_lambda(3.875) == pytest.approx(32.0)
        for lam in (0.0, 1.0, 2.5, 3.875):
            assert lambda_from_t(t_from_lambda(lam)) == pytest.approx(lam)
        assert np.allclose(f_from_chi([1.0, 2.0], 4.0), [4.0, 8.0])


class TestSubcritical:
    """L u = u^p."""

    def test_round_sphere_solution_is_constant(self, sphere6_metric):
        u = subcritical_starter(sphere6_metric, 1.75)
        assert u.convention is ExponentConvention.SECOND_ORDER
        assert np.allclose(u.values, 30.0 ** (1.0 / 0.75), rtol=1e-8)
        assert subcritical_residual(sphere6_metric, u.values, 1.75) <= 1e-9

    def test_perturbed_sphere(self, perturbed_sphere6):
        u = subcritical_starter(perturbed_sphere6, 1.6)
        assert np.all(u.values > 0)
        assert subcritical_residual(perturbed_sphere6, u.values, 1.6) <= 1e-9

    def test_needs_positive_yamabe(self, torus6_metric):
        with pytest.raises(PreconditionError, match="Y\\(M,g\\) > 0"):
            subcritical_starter(torus6_metric)

    def test_window_checked_first(self, sphere6_metric):
        with pytest.raises(WindowError):
            subcritical_starter(sphere6_metric, 2.5)

    def test_verification_routes_agree(self, perturbed_sphere6):
        u = subcritical_starter(perturbed_sphere6, 1.75)
        verification = verify_starter(perturbed_sphere6, u, 1.75)
        assert verification.agree
        assert verification.positive
        assert verification.max_relative_difference <= 1e-6

    def test_tolerance_has_roundoff_floor(self):
        assert subcritical_tolerance(32) == pytest.approx(1e-9)
        assert subcritical_tolerance(256) > subcritical_tolerance(128) > 1e-9

    def test_verification_needs_second_order_factor(self, sphere6_metric):
        u = ConformalFactor.fourth_order(np.ones(sphere6_metric.grid.resolution), 6)
        with pytest.raises(ValueError, match="second-order"):
            verify_starter(sphere6_metric, u, 1.75)


class TestLambdaZeroAndChi:
    """Choice of lambda_0 and chi."""

    def test_round_sphere_values(self, sphere6_metric):
        ones = np.ones(sphere6_metric.grid.resolution)
        starter = find_lambda0_chi(sphere6_metric, ones)
        assert starter.lambda0 == pytest.approx(4.0 - DEFAULT_DELTA)
        # 24 - 3.875 * 15/4
        assert np.allclose(starter.chi, 9.46875)
        assert starter.margins[0] == pytest.approx(3.0)
        assert starter.t0 == pytest.approx(32.0)

    def test_delta_sets_the_cap(self, product24_metric):
        ones = np.ones(product24_metric.grid.resolution)
        starter = find_lambda0_chi(product24_metric, ones, delta=0.5)
        assert starter.lambda0 == pytest.approx(3.5)
        assert np.allclose(starter.chi, 4.56 - 3.5 * 0.65)

    def test_flat_torus_fails_precondition(self, torus6_metric):
        ones = np.ones(torus6_metric.grid.resolution)
        with pytest.raises(PreconditionError, match="J~ > 0") as info:
            find_lambda0_chi(torus6_metric, ones)
        assert info.value.field_minimum == pytest.approx(0.0)

    def test_starter_solves_path_equation(self, perturbed_sphere6):
        starter = build_starter(perturbed_sphere6)
        assert starter.p_used == pytest.approx(1.75)
        assert starter.verification is not None and starter.verification.agree
        assert 0.0 < starter.lambda0 <= 4.0 - DEFAULT_DELTA
        assert starter.u0.convention is ExponentConvention.FOURTH_ORDER
        residual = strong_residual(
            perturbed_sphere6, starter.u0.values, starter.lambda0, starter.chi
        )
        scale = 1.0 + np.max(np.abs(starter.chi))
        assert residual_norm(perturbed_sphere6, residual) / scale <= 1e-9


@pytest.mark.parametrize("resolution", [128, 256])
class TestHighResolution:
    """The starter and its verification on fine grids."""

    def test_verification_routes_agree(self, sphere6, resolution):
        metric = perturbed_background(sphere6, make_grid(sphere6, resolution), 0.2, 1)
        u = subcritical_starter(metric, 1.75)
        assert subcritical_residual(metric, u.values, 1.75) <= subcritical_tolerance(resolution)
        verification = verify_starter(metric, u, 1.75)
        assert verification.agree
        assert verification.positive
        assert verification.max_relative_difference <= 1e-6

    def test_build_starter(self, sphere6, resolution):
        metric = perturbed_background(sphere6, make_grid(sphere6, resolution), 0.2, 1)
        starter = build_starter(metric)
        assert starter.verification is not None and starter.verification.agree
        assert 0.0 < starter.lambda0 <= 4.0 - DEFAULT_DELTA
        assert np.all(starter.u0.values > 0.0)
