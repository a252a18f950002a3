"""The conformal Laplacian, the Paneitz operator and identity checks built on them.

Both operators are assembled in whatever metric they are given, so the same code
produces P_g on a model background and P_g~ on a conformal metric.
"""

import logging
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy import linalg

from paneitzlab.geometry.metric import ConformalMetric, check_positive
from paneitzlab.operators.matrix import OperatorMatrix

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

KERNEL_TOLERANCE = 1e-8
ROUNDOFF_SCALE = 10.0
REFINEMENT_FACTOR = 4.0


def assemble_conformal_laplacian(metric: ConformalMetric) -> OperatorMatrix:
    """L = -(4(n-1)/(n-2)) Delta + R."""
    return OperatorMatrix(
        name="L",
        entries=metric.conformal_laplacian_matrix.copy(),
        weights=metric.weights,
        metric_tag=metric.label,
        dimension=metric.n,
        form=metric.conformal_laplacian_form.copy(),
        basis=metric.grid.resolved_basis,
    )


def assemble_paneitz(metric: ConformalMetric) -> OperatorMatrix:
    """P = Delta^2 + div(4 A(grad, .) - (n-2) J grad) + ((n-4)/2) Q."""
    return OperatorMatrix(
        name="P",
        entries=metric.paneitz_matrix.copy(),
        weights=metric.weights,
        metric_tag=metric.label,
        dimension=metric.n,
        form=metric.paneitz_form.copy(),
        basis=metric.grid.resolved_basis,
    )


def paneitz_energy(metric: ConformalMetric, phi: npt.ArrayLike) -> float:
    """int (Delta phi)^2 - 4 A(grad phi, grad phi) + (n-2) J |grad phi|^2 + ((n-4)/2) Q phi^2."""
    values = np.asarray(phi, dtype=float)
    n = metric.n
    f = metric.fields
    grad_sq = metric.grad_sq(values)
    integrand = (
        metric.laplacian(values) ** 2
        - 4.0 * f.A_radial * grad_sq
        + (n - 2) * f.Jt * grad_sq
        + 0.5 * (n - 4) * f.Qt * values**2
    )
    return metric.integrate(integrand)


def conformal_covariance_residual(
    metric: ConformalMetric, rho: npt.ArrayLike, phi: npt.ArrayLike
) -> float:
    """sup |P_g~ phi - rho^{-(n+4)/(n-4)} P_g(rho phi)| / sup |P_g(rho phi)|, g~ = rho^{4/(n-4)} g."""
    factor = check_positive(rho)
    values = np.asarray(phi, dtype=float)
    n = metric.n
    child = metric.transform(factor)
    pulled = metric.paneitz_matrix @ (factor * values)
    lhs = child.paneitz_matrix @ values
    rhs = factor ** (-(n + 4.0) / (n - 4)) * pulled
    scale = float(np.max(np.abs(pulled)))
    if scale == 0.0:
        return float(np.max(np.abs(lhs - rhs)))
    return float(np.max(np.abs(lhs - rhs))) / scale


def roundoff_floor(resolution: int) -> float:
    """Residual level where fourth-order node arithmetic stops improving, ~ eps N^4."""
    return ROUNDOFF_SCALE * float(np.finfo(float).eps) * float(resolution) ** 4


def refinement_converges(coarse: float, fine: float, fine_resolution: int) -> bool:
    """A doubling passes when the residual drops REFINEMENT_FACTOR-fold or sits at roundoff."""
    return fine * REFINEMENT_FACTOR <= coarse or fine <= roundoff_floor(fine_resolution)


def bochner_residual(metric: ConformalMetric, phi: npt.ArrayLike) -> float:
    """Integrated Bochner identity mismatch, relative to int (Delta phi)^2."""
    values = np.asarray(phi, dtype=float)
    f = metric.fields
    grad_sq = metric.grad_sq(values)
    lap_sq = metric.integrate(metric.laplacian(values) ** 2)
    hess_sq = metric.integrate(metric.hessian(values).norm_squared())
    mismatch = (
        lap_sq
        - hess_sq
        - metric.integrate(f.Jt * grad_sq)
        - (metric.n - 2) * metric.integrate(f.A_radial * grad_sq)
    )
    scale = max(1.0, metric.integrate(values**2))
    if lap_sq <= 1e-14 * scale:
        return abs(mismatch)
    return abs(mismatch) / lap_sq


@dataclass(frozen=True)
class GreensCheck:
    kernel_trivial: bool
    positive: bool
    min_abs_eigenvalue: float
    green_minimum: float


def greens_sign_check(P: OperatorMatrix, source: int) -> GreensCheck:
    """Solve P G = delta_source / w_source and report the sign of G.

    Near-singular operators (smallest |eigenvalue| at most 1e-8 ||P||) are
    reported as having a kernel and are not solved.
    """
    eigenvalues = P.eigenvalues
    min_abs = float(np.min(np.abs(eigenvalues)))
    if min_abs <= KERNEL_TOLERANCE * P.norm:
        logger.info(f"{P.name} on {P.metric_tag} has a kernel, min |eig|={min_abs:.3g}")
        return GreensCheck(False, False, min_abs, float("nan"))
    rhs = np.zeros(P.entries.shape[0])
    rhs[source] = 1.0 / P.weights[source]
    green = linalg.solve(P.entries, rhs)
    minimum = float(green.min())
    return GreensCheck(True, minimum > 0.0, min_abs, minimum)
