"""Pytest configuration for the project."""

# conftest.py

import os

import dotenv
import numpy as np
import pytest

from paneitzlab.bus.metrics import reset_metrics_collector
from paneitzlab.geometry.background import FlatTorus, RoundSphere, SphereProduct
from paneitzlab.geometry.conformal import perturbed_background
from paneitzlab.geometry.grid import make_grid
from paneitzlab.geometry.metric import background_metric

dotenv.load_dotenv()

RESOLUTION = 32


def pytest_addoption(parser):
    parser.addoption("--ipdb", action="store_true", help="Enable IPython debugger")


def pytest_configure(config):
    if config.getoption("--ipdb"):
        os.environ["PYTHONBREAKPOINT"] = "IPython.core.debugger.set_trace"
        config.option.pdb = True
        config.option.pdbcls = "IPython.core.debugger:Pdb"


@pytest.fixture(autouse=True)
def reset_metrics():
    """Reset the process-wide metrics collector around every test."""
    reset_metrics_collector()
    yield
    reset_metrics_collector()


@pytest.fixture(scope="session")
def sphere6():
    return RoundSphere(6)


@pytest.fixture(scope="session")
def sphere6_grid(sphere6):
    return make_grid(sphere6, RESOLUTION)


@pytest.fixture(scope="session")
def sphere6_metric(sphere6, sphere6_grid):
    return background_metric(sphere6, sphere6_grid)


@pytest.fixture(scope="session")
def perturbed_sphere6(sphere6, sphere6_grid):
    """Round S^6 conformally perturbed by 1 + 0.2 cos(theta)."""
    return perturbed_background(sphere6, sphere6_grid, 0.2, 1)


@pytest.fixture(scope="session")
def torus6():
    return FlatTorus(6)


@pytest.fixture(scope="session")
def torus6_metric(torus6):
    return background_metric(torus6, make_grid(torus6, RESOLUTION))


@pytest.fixture(scope="session")
def product24():
    return SphereProduct(2, 1.0, 4, 1.0)


@pytest.fixture(scope="session")
def product24_metric(product24):
    return background_metric(product24, make_grid(product24, RESOLUTION))


@pytest.fixture
def smooth_factor():
    """Positive band-limited factor exp(0.3 phi) on a metric's grid."""

    def build(metric, seed=0, modes=6):
        rng = np.random.default_rng(seed)
        coeffs = rng.standard_normal(modes) / (1.0 + np.arange(modes)) ** 2
        phi = metric.grid.synthesize(coeffs)
        return np.exp(0.3 * phi / np.max(np.abs(phi)))

    return build


@pytest.fixture
def test_function():
    """Band-limited test function on a metric's grid."""

    def build(metric, seed=0, modes=8):
        rng = np.random.default_rng(seed)
        coeffs = rng.standard_normal(modes) / (1.0 + np.arange(modes)) ** 2
        return metric.grid.synthesize(coeffs)

    return build
