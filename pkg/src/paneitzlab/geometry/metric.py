"""Metrics in the conformal class of a model background.

A ``ConformalMetric`` is g = e^{2 psi} g_model on a collocation grid. Metrics are
built in chains: the model metric sits at the root and every other metric is
obtained from its parent by a fourth-order factor u, g = u^{4/(n-4)} g_parent.
Curvature is always transformed from the parent, so the algebraic identities
between a metric and its parent hold to roundoff.

All pointwise tensor quantities are reported as eigenvalues in an orthonormal
frame of the metric itself: one radial value plus one value per orbit block.

Operators come in pairs: a node matrix in weighted-divergence form for pointwise
use, and a symmetric weak form (f^T K h = int h M f dmu) for quadratic forms and
eigenproblems.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
import numpy.typing as npt

from paneitzlab.errors import NonPositiveFactorError
from paneitzlab.geometry.background import (
    BackgroundCurvature,
    BackgroundManifold,
    make_background,
)
from paneitzlab.geometry.grid import CollocationGrid, HessianComponents, OrbitBlock

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class CurvatureFields:
    """Schouten eigenvalues, Q and derived scalars of a metric, at the nodes."""

    n: int
    A_radial: Array
    A_blocks: Tuple[Array, ...]
    multiplicities: Tuple[int, ...]
    Jt: Array
    absA2t: Array
    sigma2t: Array
    Qt: Array
    Rt: Array
    volume_element: Array

    @classmethod
    def from_schouten(
        cls,
        n: int,
        A_radial: Array,
        A_blocks: Tuple[Array, ...],
        multiplicities: Tuple[int, ...],
        Qt: Array,
        volume_element: Array,
    ) -> "CurvatureFields":
        J = A_radial.copy()
        absA2 = A_radial**2
        for mult, values in zip(multiplicities, A_blocks):
            J = J + mult * values
            absA2 = absA2 + mult * values**2
        return cls(
            n=n,
            A_radial=A_radial,
            A_blocks=A_blocks,
            multiplicities=multiplicities,
            Jt=J,
            absA2t=absA2,
            sigma2t=0.5 * (J**2 - absA2),
            Qt=Qt,
            Rt=2.0 * (n - 1) * J,
            volume_element=volume_element,
        )

    def contract(self, hessian: HessianComponents) -> Array:
        """Pointwise g(A, D^2 f) for a Hessian given in the same frame."""
        total = self.A_radial * hessian.radial
        for mult, a, h in zip(self.multiplicities, self.A_blocks, hessian.tangential):
            total = total + mult * a * h
        return total


@dataclass(frozen=True, eq=False)
class ConformalMetric:
    """g = e^{2 psi} g_model, with psi and its radial derivative stored at the nodes.

    ``psi_r`` is the model-frame radial derivative of psi. It is carried
    alongside psi (rather than differentiated from it) so that the log-derivative
    of each factor in the chain is u_r / u with u_r the spectral derivative of u.
    """

    grid: CollocationGrid
    model_curvature: BackgroundCurvature
    psi: Array
    psi_r: Array
    parent: Optional["ConformalMetric"] = None
    factor: Optional[Array] = None
    label: str = field(default="model")

    @property
    def n(self) -> int:
        return self.grid.dimension

    @property
    def spec(self) -> BackgroundManifold:
        return self.grid.spec

    @property
    def is_model(self) -> bool:
        return self.parent is None

    @property
    def blocks(self) -> Tuple[OrbitBlock, ...]:
        return self.grid.symmetry_class.blocks

    @property
    def multiplicities(self) -> Tuple[int, ...]:
        return tuple(block.multiplicity for block in self.blocks)

    @cached_property
    def weights(self) -> Array:
        return self.grid.quad_weights * np.exp(self.n * self.psi)

    @property
    def volume(self) -> float:
        return float(np.sum(self.weights))

    def integrate(self, values: npt.ArrayLike) -> float:
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))

    def inner(self, f: npt.ArrayLike, h: npt.ArrayLike) -> float:
        return self.integrate(np.asarray(f) * np.asarray(h))

    def lp_norm(self, f: npt.ArrayLike, p: float) -> float:
        return self.integrate(np.abs(np.asarray(f, dtype=float)) ** p) ** (1.0 / p)

    @cached_property
    def gradient_matrix(self) -> Array:
        """Radial component of the gradient in the metric's orthonormal frame."""
        return np.exp(-self.psi)[:, None] * self.grid.gradient

    def flux_matrix(self, coefficient: npt.ArrayLike) -> Array:
        """Node matrix of f -> div_g(c grad_g f), in weighted-divergence form.

        div_g(c grad_g f) = e^{-n psi} Dv (e^{(n-2) psi} c G^ f) for g = e^{2 psi} g_model.
        """
        g = self.grid
        c = np.asarray(coefficient, dtype=float) * np.ones(g.resolution)
        inner = (np.exp((self.n - 2) * self.psi) * c)[:, None] * g.reduced_gradient
        return np.exp(-self.n * self.psi)[:, None] * (g.divergence @ inner)

    def flux_form(self, coefficient: npt.ArrayLike) -> Array:
        """Symmetric matrix K with f^T K h = int c <grad f, grad h> dmu_g."""
        g = self.grid
        c = np.asarray(coefficient, dtype=float) * np.ones(g.resolution)
        scale = g.quad_weights * np.exp((self.n - 2) * self.psi) * g.gradient_weight * c
        return g.reduced_gradient.T @ (scale[:, None] * g.reduced_gradient)

    @cached_property
    def laplacian_matrix(self) -> Array:
        return self.flux_matrix(1.0)

    @cached_property
    def radial_hessian_matrix(self) -> Array:
        g = self.grid
        inner = g.radial_hessian - self.psi_r[:, None] * g.gradient
        return np.exp(-2.0 * self.psi)[:, None] * inner

    @cached_property
    def block_hessian_matrices(self) -> Tuple[Array, ...]:
        g = self.grid
        scale = np.exp(-2.0 * self.psi)[:, None]
        shift = self.psi_r[:, None] * g.gradient
        return tuple(
            scale * ((g.orbit_matrix if block.curved else 0.0) + shift)
            for block in self.blocks
        )

    def gradient(self, f: npt.ArrayLike) -> Array:
        return self.gradient_matrix @ np.asarray(f, dtype=float)

    def grad_sq(self, f: npt.ArrayLike) -> Array:
        return self.gradient(f) ** 2

    def laplacian(self, f: npt.ArrayLike) -> Array:
        return self.laplacian_matrix @ np.asarray(f, dtype=float)

    def hessian(self, f: npt.ArrayLike) -> HessianComponents:
        values = np.asarray(f, dtype=float)
        return HessianComponents(
            radial=self.radial_hessian_matrix @ values,
            tangential=tuple(m @ values for m in self.block_hessian_matrices),
            multiplicities=self.multiplicities,
        )

    @cached_property
    def fields(self) -> CurvatureFields:
        if self.parent is None or self.factor is None:
            return self._model_fields()
        return transformed_fields(self.parent, self.factor)

    def fourth_order_matrix(self, flux: npt.ArrayLike, potential: npt.ArrayLike) -> Array:
        """Node matrix of Delta^2 + div(flux grad) + potential in this metric."""
        lap = self.laplacian_matrix
        entries = lap @ lap + self.flux_matrix(flux)
        entries[np.diag_indices_from(entries)] += potential
        return entries

    def fourth_order_form(self, flux: npt.ArrayLike, potential: npt.ArrayLike) -> Array:
        """Weak form of the same operator: int (Delta f)(Delta h) - flux <grad f, grad h> + potential f h."""
        lap = self.laplacian_matrix
        form = lap.T @ (self.weights[:, None] * lap) - self.flux_form(flux)
        form[np.diag_indices_from(form)] += self.weights * potential
        return form

    def _paneitz_terms(self) -> Tuple[Array, Array]:
        # gradients of cohomogeneity-one functions are radial, so only A_r enters
        f = self.fields
        return 4.0 * f.A_radial - (self.n - 2) * f.Jt, 0.5 * (self.n - 4) * f.Qt

    @cached_property
    def paneitz_matrix(self) -> Array:
        """P = Delta^2 + div((4 A_r - (n-2) J) grad) + ((n-4)/2) Q, in this metric."""
        return self.fourth_order_matrix(*self._paneitz_terms())

    @cached_property
    def paneitz_form(self) -> Array:
        return self.fourth_order_form(*self._paneitz_terms())

    @cached_property
    def conformal_laplacian_matrix(self) -> Array:
        entries = -_yamabe_constant(self.n) * self.laplacian_matrix
        entries[np.diag_indices_from(entries)] += self.fields.Rt
        return entries

    @cached_property
    def conformal_laplacian_form(self) -> Array:
        form = _yamabe_constant(self.n) * self.flux_form(1.0)
        form[np.diag_indices_from(form)] += self.weights * self.fields.Rt
        return form

    def transform(self, u: npt.ArrayLike, label: Optional[str] = None) -> "ConformalMetric":
        """Child metric u^{4/(n-4)} g for a positive fourth-order factor u."""
        values = check_positive(u)
        c1 = 2.0 / (self.n - 4)
        log_derivative = (self.grid.gradient @ values) / values
        return ConformalMetric(
            grid=self.grid,
            model_curvature=self.model_curvature,
            psi=self.psi + c1 * np.log(values),
            psi_r=self.psi_r + c1 * log_derivative,
            parent=self,
            factor=values,
            label=label or f"{self.label}*u",
        )

    def _model_fields(self) -> CurvatureFields:
        bg = self.model_curvature
        ones = np.ones(self.grid.resolution)
        radial = bg.block(self.grid.symmetry_class.radial_factor).value
        return CurvatureFields.from_schouten(
            n=self.n,
            A_radial=radial * ones,
            A_blocks=tuple(bg.block(b.factor).value * ones for b in self.blocks),
            multiplicities=self.multiplicities,
            Qt=bg.Q0 * ones,
            volume_element=ones,
        )


def background_metric(spec: BackgroundManifold, grid: CollocationGrid) -> ConformalMetric:
    """The model metric of a background on its grid."""
    if grid.spec != spec:
        raise ValueError(f"grid was built for {grid.spec.label}, not {spec.label}")
    zeros = np.zeros(grid.resolution)
    zeros.setflags(write=False)
    return ConformalMetric(
        grid=grid,
        model_curvature=make_background(spec),
        psi=zeros,
        psi_r=zeros,
        label=spec.label,
    )


def transformed_fields(parent: ConformalMetric, u: Array) -> CurvatureFields:
    """Curvature of u^{4/(n-4)} g_parent from the parent's curvature and u.

    A~_ij = A_ij - c1 u^-1 u_ij - c2 u^-2 |grad u|^2 g_ij + c3 u^-2 u_i u_j with
    c1 = 2/(n-4), c2 = 2/(n-4)^2, c3 = 2(n-2)/(n-4)^2; eigenvalues in the new
    metric pick up u^{-4/(n-4)}. Q~ = (2/(n-4)) u^{-(n+4)/(n-4)} P_parent u.
    """
    n = parent.n
    c1 = 2.0 / (n - 4)
    c2 = 2.0 / (n - 4) ** 2
    c3 = 2.0 * (n - 2) / (n - 4) ** 2
    base = parent.fields
    hess = parent.hessian(u)
    grad_sq = parent.grad_sq(u)
    inv_u = 1.0 / u
    scale = u ** (-4.0 / (n - 4))

    isotropic = c2 * inv_u**2 * grad_sq
    radial = base.A_radial - c1 * inv_u * hess.radial - isotropic + c3 * inv_u**2 * grad_sq
    blocks = tuple(
        scale * (a - c1 * inv_u * h - isotropic)
        for a, h in zip(base.A_blocks, hess.tangential)
    )
    critical = (n + 4.0) / (n - 4)
    Qt = c1 * u ** (-critical) * (parent.paneitz_matrix @ u)
    logger.debug(f"Transformed curvature from {parent.label}: min u={u.min():.6g}")
    return CurvatureFields.from_schouten(
        n=n,
        A_radial=scale * radial,
        A_blocks=blocks,
        multiplicities=base.multiplicities,
        Qt=Qt,
        volume_element=u ** (2.0 * n / (n - 4)),
    )


def _yamabe_constant(n: int) -> float:
    return 4.0 * (n - 1) / (n - 2)


def check_positive(u: npt.ArrayLike) -> Array:
    values = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(values)):
        raise NonPositiveFactorError("conformal factor has non-finite node values")
    if values.size == 0 or float(values.min()) <= 0.0:
        minimum = float(values.min()) if values.size else math.nan
        raise NonPositiveFactorError(
            f"conformal factor must be positive, min value is {minimum:.6g}"
        )
    return values
