"""Tests for the Paneitz operator and the identities built on it."""

import numpy as np
import pytest

from paneitzlab.geometry.grid import make_grid
from paneitzlab.geometry.metric import background_metric
from paneitzlab.operators.paneitz import (
    assemble_conformal_laplacian,
    assemble_paneitz,
    bochner_residual,
    conformal_covariance_residual,
    greens_sign_check,
    paneitz_energy,
    refinement_converges,
    roundoff_floor,
)

METRICS = ["sphere6_metric", "perturbed_sphere6", "torus6_metric", "product24_metric"]


class TestAssembly:
    """Operator assembly on a metric."""

    def test_tags_and_weights(self, perturbed_sphere6):
        P = assemble_paneitz(perturbed_sphere6)
        L = assemble_conformal_laplacian(perturbed_sphere6)
        assert P.name == "P" and L.name == "L"
        assert P.metric_tag == perturbed_sphere6.label
        assert P.weighted_symmetric
        assert np.array_equal(P.weights, perturbed_sphere6.weights)
        assert P.dimension == 6

    def test_constant_on_sphere(self, sphere6_metric):
        ones = np.ones(sphere6_metric.grid.resolution)
        assert np.allclose(assemble_paneitz(sphere6_metric).apply(ones), 24.0)
        assert np.allclose(assemble_conformal_laplacian(sphere6_metric).apply(ones), 30.0)

    def test_flat_torus_is_bilaplacian(self, torus6_metric):
        f = torus6_metric.grid.mode_profile(2)
        P = assemble_paneitz(torus6_metric)
        assert np.allclose(P.apply(f), 16.0 * f, atol=1e-8)

    @pytest.mark.parametrize("metric_name", METRICS)
    def test_self_adjoint(self, request, metric_name, test_function):
        metric = request.getfixturevalue(metric_name)
        P = assemble_paneitz(metric)
        f = test_function(metric, seed=1)
        h = test_function(metric, seed=2)
        assert P.symmetry_defect(f, h) < 1e-8

    @pytest.mark.parametrize("metric_name", METRICS)
    def test_energy_is_quadratic_form(self, request, metric_name, test_function):
        metric = request.getfixturevalue(metric_name)
        f = test_function(metric, seed=3)
        form = assemble_paneitz(metric).quadratic_form(f)
        assert paneitz_energy(metric, f) == pytest.approx(form, rel=1e-8)


@pytest.mark.parametrize("metric_name", METRICS)
class TestIdentities:
    """Conformal covariance and the integrated Bochner identity."""

    def test_conformal_covariance(self, request, metric_name, smooth_factor, test_function):
        metric = request.getfixturevalue(metric_name)
        rho = smooth_factor(metric, seed=21)
        for seed in range(4):
            phi = test_function(metric, seed=seed)
            assert conformal_covariance_residual(metric, rho, phi) < 1e-7

    def test_bochner(self, request, metric_name, test_function):
        metric = request.getfixturevalue(metric_name)
        for seed in range(4):
            assert bochner_residual(metric, test_function(metric, seed=seed)) < 1e-8


class TestCovarianceConvergence:
    """The covariance residual under refinement to high resolution."""

    RESOLUTIONS = (64, 128, 256)

    @pytest.mark.parametrize(
        "coefficients", [(1.0,), (1.0, 0.5, -0.2)], ids=["cos2", "cos2-4-6"]
    )
    def test_refinement(self, sphere6, coefficients):
        residuals = []
        for resolution in self.RESOLUTIONS:
            metric = background_metric(sphere6, make_grid(sphere6, resolution))
            rho = 1.0 + 0.3 * metric.grid.mode_profile(1)
            phi = sum(c * metric.grid.mode_profile(2 * (i + 1)) for i, c in enumerate(coefficients))
            residuals.append(conformal_covariance_residual(metric, rho, phi))
        for coarse, fine, resolution in zip(residuals, residuals[1:], self.RESOLUTIONS[1:]):
            assert refinement_converges(coarse, fine, resolution), residuals
        assert residuals[-1] <= 1e-5

    def test_roundoff_floor(self):
        assert roundoff_floor(128) == pytest.approx(roundoff_floor(64) * 16.0)
        assert roundoff_floor(256) < 1e-5
        assert refinement_converges(1e-3, 2e-4, 64)
        assert not refinement_converges(1e-3, 5e-4, 64)
        assert refinement_converges(1e-9, 2e-9, 64)


class TestGreensFunction:
    """Sign of the Green's function."""

    def test_round_sphere_green_is_solved(self, sphere6_metric):
        result = greens_sign_check(assemble_paneitz(sphere6_metric), 0)
        assert result.kernel_trivial
        assert np.isfinite(result.green_minimum)
        assert result.min_abs_eigenvalue == pytest.approx(24.0, rel=1e-9)

    def test_flat_torus_has_kernel(self, torus6_metric):
        result = greens_sign_check(assemble_paneitz(torus6_metric), 0)
        assert not result.kernel_trivial
        assert np.isnan(result.green_minimum)
