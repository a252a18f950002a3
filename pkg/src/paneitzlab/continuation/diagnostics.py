"""Per-state monitoring: a priori quantities and integral identities."""

import logging
from typing import Dict, Sequence, Tuple

import numpy as np

from paneitzlab.continuation.state import ContinuationState, DiagnosticsRecord
from paneitzlab.errors import WindowError
from paneitzlab.geometry.conformal import scalar_positivity_margin, total_q_residual
from paneitzlab.geometry.metric import ConformalMetric

logger = logging.getLogger(__name__)


def q_window(n: int) -> Tuple[float, float]:
    """Open window for the auxiliary exponent q (from the window on q + 1)."""
    return 4.0 * (n - 1) / (n * (n - 4)) - 1.0, (n - 2.0) / (n - 4) - 1.0


def check_q(n: int, q: float) -> None:
    lower, upper = q_window(n)
    if not lower < q < upper:
        raise WindowError("q", q, lower, upper, n)


def identity_34_residual(metric: ConformalMetric, state: ContinuationState) -> float:
    """(1 - lambda/4) int Q~ + ((n-4)/8) lambda int J~^2 = int chi u dmu, normalized."""
    n = metric.n
    lam = state.lam
    g = state.metric
    f = g.fields
    lhs = (1.0 - lam / 4.0) * g.integrate(f.Qt) + (n - 4) / 8.0 * lam * g.integrate(
        f.Jt**2
    )
    rhs = metric.integrate(state.chi * state.u)
    return abs(lhs - rhs) / (1.0 + abs(rhs))


def identity_37_terms(
    metric: ConformalMetric, state: ContinuationState, alpha: float
) -> Dict[str, float]:
    """Both sides of the u^alpha-tested path equation after integration by parts."""
    n = metric.n
    lam = state.lam
    u = state.u
    f = metric.fields
    lap = metric.laplacian(u)
    grad_sq = metric.grad_sq(u)
    c1 = alpha * (alpha - 1.0) + (3.0 * alpha - 1.0) * lam / (2.0 * (n - 4))
    c2 = lam * ((n - 4) * alpha**2 - (n - 8) * alpha - 2.0) / (2.0 * (n - 4) ** 2)
    return {
        "lhs": 0.5 * (n - 4) * metric.integrate(state.chi * u**alpha),
        "laplacian_squared": alpha * metric.integrate(u ** (alpha - 1) * lap**2),
        "gradient_laplacian": c1 * metric.integrate(u ** (alpha - 2) * grad_sq * lap),
        "gradient_quartic": c2 * metric.integrate(u ** (alpha - 3) * grad_sq**2),
        "scalar": (n - 2 - lam) * alpha * metric.integrate(f.Jt * u ** (alpha - 1) * grad_sq),
        "schouten": -(4 - lam) * alpha * metric.integrate(
            u ** (alpha - 1) * f.A_radial * grad_sq
        ),
        "zeroth_order": 0.5 * (n - 4) * metric.integrate(
            (f.Qt - lam * f.sigma2t) * u ** (alpha + 1)
        ),
    }


def identity_37_residual(
    metric: ConformalMetric, state: ContinuationState, alpha: float
) -> float:
    terms = identity_37_terms(metric, state, alpha)
    lhs = terms.pop("lhs")
    rhs = sum(terms.values())
    scale = 1.0 + abs(lhs) + sum(abs(v) for v in terms.values())
    return abs(lhs - rhs) / scale


def diagnostics(
    metric: ConformalMetric,
    state: ContinuationState,
    q: float = 0.8,
    alpha: float = 2.0,
    h_min_eig: float = float("nan"),
) -> DiagnosticsRecord:
    """Fill the monitoring record of an accepted state."""
    n = metric.n
    check_q(n, q)
    u = state.u
    f = metric.fields
    v = u ** (-q - 1.0) * (-metric.laplacian(u) + 0.5 * (n - 4) * f.Jt * u)
    lower = (2.0 / (n - 4)) * u ** (-q - 2.0) * metric.grad_sq(u)
    margin = scalar_positivity_margin(metric, u).margin
    return DiagnosticsRecord(
        u_critical_norm=metric.lp_norm(u, 2.0 * n / (n - 4)),
        u_min=float(u.min()),
        u_sup=float(u.max()),
        v_field=v,
        v_sup=float(np.max(np.abs(v))),
        v_lower_margin=float((v - lower).min()),
        min_j_margin=float(margin.min()),
        identity_34_residual=identity_34_residual(metric, state),
        identity_37_residual=identity_37_residual(metric, state, alpha),
        total_q_residual=total_q_residual(state.metric),
        h_min_eig=h_min_eig,
    )


def boundedness_proxy(states: Sequence[ContinuationState]) -> Dict[str, bool]:
    """For each monitored norm: is its max over the path within 2x of the first half?"""
    records = [s.diagnostics for s in states if s.diagnostics is not None]
    if not records:
        return {}
    half = records[: max(1, (len(records) + 1) // 2)]
    quantities = {
        "u_critical_norm": lambda d: d.u_critical_norm,
        "inverse_u_min": lambda d: 1.0 / d.u_min,
        "v_sup": lambda d: d.v_sup,
        "u_sup": lambda d: d.u_sup,
    }
    result = {}
    for name, get in quantities.items():
        whole = max(get(d) for d in records)
        first = max(get(d) for d in half)
        result[name] = whole <= 2.0 * first
    return result
