"""End-to-end continuity path on a perturbed round sphere."""

import numpy as np
import pytest

from paneitzlab.continuation.diagnostics import boundedness_proxy
from paneitzlab.continuation.solver import residual_norm, run_path, strong_residual
from paneitzlab.continuation.state import PathConfig
from paneitzlab.invariants.starter import build_starter
from paneitzlab.messages.events import PathFinished, PathStateAccepted


@pytest.fixture(scope="module")
def perturbed_path(perturbed_sphere6):
    starter = build_starter(perturbed_sphere6)
    events = []
    config = PathConfig()
    states = run_path(perturbed_sphere6, starter, config, events.append)
    return starter, config, states, events


def test_reaches_lambda_zero(perturbed_path):
    starter, _, states, _ = perturbed_path
    assert states[0].lam == pytest.approx(starter.lambda0)
    assert states[-1].lam == 0.0
    lams = [s.lam for s in states]
    assert all(a > b for a, b in zip(lams, lams[1:]))


def test_final_metric_has_positive_q_and_r(perturbed_path):
    _, _, states, events = perturbed_path
    final = states[-1].fields
    assert final.Qt.min() > 0.0
    assert final.Rt.min() > 0.0
    finished = events[-1]
    assert isinstance(finished, PathFinished)
    assert finished.min_q == pytest.approx(float(final.Qt.min()))


def test_every_state_solves_its_equation(perturbed_path, perturbed_sphere6):
    starter, config, states, _ = perturbed_path
    tol = config.tolerance(starter.chi, perturbed_sphere6.grid.resolution)
    for state in states:
        assert state.residual_norm <= tol
        recomputed = strong_residual(perturbed_sphere6, state.u, state.lam, state.chi)
        assert residual_norm(perturbed_sphere6, recomputed) <= 10.0 * tol


def test_positivity_and_identities_along_path(perturbed_path):
    _, _, states, events = perturbed_path
    for state in states:
        d = state.diagnostics
        assert d.u_min > 0.0
        assert d.min_j_margin > 0.0
        assert d.h_min_eig > 0.0
        assert d.identity_34_residual < 1e-6
        assert d.identity_37_residual < 1e-6
        assert d.total_q_residual < 1e-6
    rows = [e.row for e in events if isinstance(e, PathStateAccepted)]
    assert len(rows) == len(states)
    assert all(np.isfinite(list(row.values())).all() for row in rows)


def test_monitored_norms_stay_bounded(perturbed_path):
    _, _, states, _ = perturbed_path
    assert all(boundedness_proxy(states).values())
