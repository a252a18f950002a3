"""Collocation grids for cohomogeneity-one functions.

Zonal grids (spheres and sphere products) put the nodes at the interior midpoints
theta_j = (j + 1/2) pi / N of the polar angle, the Chebyshev-Gauss points of
x = cos(theta). Functions are represented by their values there, which is the
same as a cosine series of N terms: every such series is even across both poles,
so reflection through a pole is built in and no node sits on the axis. The volume
weights are the Fejer rule in x times the polynomial part of sin^(m-1) when m is
even, and the midpoint rule in theta times sin^(m-1) when m is odd.

The Laplacian is kept in divergence form Delta = Dv G^, with G^ f = f_theta /
(r sin theta) and Dv h = (sin theta h_theta + m cos theta h) / r, so summation by
parts against the weights is exact for band-limited functions. Periodic grids
(flat tori) use uniform nodes and the real Fourier basis, with Delta = D1 D1.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Tuple

import numpy as np
import numpy.typing as npt
from scipy.special import eval_jacobi, gammaln

from paneitzlab.errors import ResolutionError
from paneitzlab.geometry.background import (
    BackgroundManifold,
    FlatTorus,
    RoundSphere,
    SphereProduct,
    sphere_volume,
)

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

MIN_RESOLUTION = 16
MAX_RESOLUTION = 1024


@dataclass(frozen=True)
class OrbitBlock:
    """A block of directions orthogonal to the radial one.

    ``curved`` blocks are tangent to the orbit spheres of the radial factor and
    carry the Hessian eigenvalue cot(theta) f_theta / r^2; flat blocks (the other
    product factor, the remaining torus directions) carry zero.
    """

    factor: str
    multiplicity: int
    curved: bool


@dataclass(frozen=True)
class SymmetryClass:
    """Descriptor of the cohomogeneity-one reduction."""

    kind: Literal["zonal", "periodic"]
    radial_factor: str
    radial_dimension: int
    length_scale: float
    blocks: Tuple[OrbitBlock, ...]


@dataclass(frozen=True)
class HessianComponents:
    """Eigenvalues of D^2 f: one radial value and one value per orbit block."""

    radial: Array
    tangential: Tuple[Array, ...]
    multiplicities: Tuple[int, ...]

    def trace(self) -> Array:
        total = self.radial.copy()
        for mult, values in zip(self.multiplicities, self.tangential):
            total += mult * values
        return total

    def norm_squared(self) -> Array:
        total = self.radial**2
        for mult, values in zip(self.multiplicities, self.tangential):
            total += mult * values**2
        return total


@dataclass(frozen=True, eq=False)
class CollocationGrid:
    """Nodes, quadrature and differentiation operators for one background.

    ``gradient`` gives the radial derivative f_r. ``reduced_gradient`` and
    ``divergence`` are the two halves of the Laplacian, and ``gradient_weight``
    converts the first into the squared gradient:
    |grad f|^2 = gradient_weight * (reduced_gradient @ f)^2.
    """

    spec: BackgroundManifold
    symmetry_class: SymmetryClass
    nodes: Array
    coordinate: Array
    quad_weights: Array
    D1: Array
    D2: Array
    gradient: Array
    reduced_gradient: Array
    divergence: Array
    gradient_weight: Array
    laplacian_matrix: Array
    orbit_matrix: Array
    radial_hessian: Array
    basis: Array
    eigenvalues: Array
    metadata: dict = field(default_factory=dict)

    @property
    def resolution(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    @property
    def volume(self) -> float:
        return float(np.sum(self.quad_weights))

    @property
    def resolved_basis(self) -> Array:
        """The lowest third of the basis, where the quadrature is exact for products."""
        return self.basis[:, : max(1, self.resolution // 3)]

    def integrate(self, values: Array) -> float:
        return float(np.dot(self.quad_weights, values))

    def synthesize(self, coefficients: npt.ArrayLike) -> Array:
        """Node values of sum_k c_k basis_k (L^2-orthonormal basis)."""
        coeffs = np.asarray(coefficients, dtype=float)
        return self.basis[:, : coeffs.shape[0]] @ coeffs

    def mode_profile(self, mode: int) -> Array:
        """cos(mode * theta) on zonal grids, cos(2 pi mode x / period) on tori."""
        if self.symmetry_class.kind == "zonal":
            return np.cos(mode * self.nodes)
        period = self.symmetry_class.length_scale * 2.0 * math.pi
        return np.cos(2.0 * math.pi * mode * self.nodes / period)


def make_grid(spec: BackgroundManifold, resolution: int) -> CollocationGrid:
    """Build the collocation grid of a background at the given resolution."""
    if resolution < MIN_RESOLUTION or resolution > MAX_RESOLUTION:
        raise ResolutionError(
            f"resolution must lie in [{MIN_RESOLUTION}, {MAX_RESOLUTION}], "
            f"got {resolution}"
        )
    if isinstance(spec, FlatTorus):
        grid = _periodic_grid(spec, resolution)
    else:
        grid = _zonal_grid(spec, resolution)
    logger.debug(
        f"Built {grid.symmetry_class.kind} grid for {spec.label} with {resolution} nodes"
    )
    return grid


def laplacian(grid: CollocationGrid, f: npt.ArrayLike) -> Array:
    """Background Laplace-Beltrami operator (analyst's sign) on node values."""
    values = _finite(f)
    return grid.laplacian_matrix @ values


def hessian_components(grid: CollocationGrid, f: npt.ArrayLike) -> HessianComponents:
    """Background Hessian eigenvalues of a cohomogeneity-one function."""
    values = _finite(f)
    orbit = grid.orbit_matrix @ values
    zeros = np.zeros_like(values)
    blocks = grid.symmetry_class.blocks
    return HessianComponents(
        radial=grid.radial_hessian @ values,
        tangential=tuple(orbit if block.curved else zeros for block in blocks),
        multiplicities=tuple(block.multiplicity for block in blocks),
    )


def cosine_transform(resolution: int) -> Tuple[Array, Array]:
    """Midpoint nodes and the analysis matrix taking node values to cosine coefficients."""
    theta = (np.arange(resolution) + 0.5) * math.pi / resolution
    modes = np.arange(resolution)
    scale = np.full(resolution, 2.0 / resolution)
    scale[0] = 1.0 / resolution
    analysis = scale[:, None] * np.cos(np.outer(modes, theta))
    return theta, analysis


def fejer_weights(theta: Array) -> Array:
    """Fejer's first rule for int_{-1}^{1} g(x) dx at x_j = cos(theta_j)."""
    resolution = theta.shape[0]
    k = np.arange(1, resolution // 2 + 1)
    series = np.cos(2.0 * np.outer(theta, k)) / (4.0 * k**2 - 1.0)
    return (2.0 / resolution) * (1.0 - 2.0 * series.sum(axis=1))


def _jacobi_norms(resolution: int, alpha: float) -> Array:
    """Squared norms of P_k^(alpha, alpha) against (1 - x^2)^alpha on [-1, 1]."""
    k = np.arange(resolution)
    log_norm = (
        (2.0 * alpha + 1.0) * math.log(2.0)
        + 2.0 * gammaln(k + alpha + 1.0)
        - np.log(2.0 * k + 2.0 * alpha + 1.0)
        - gammaln(k + 1.0)
        - gammaln(k + 2.0 * alpha + 1.0)
    )
    return np.exp(log_norm)


def _zonal_grid(spec: BackgroundManifold, resolution: int) -> CollocationGrid:
    if isinstance(spec, RoundSphere):
        factor, m, radius = "S", spec.n, spec.radius
        other_volume = 1.0
        blocks = [OrbitBlock("S", spec.n - 1, True)]
    elif isinstance(spec, SphereProduct):
        if spec.radial_factor == "q":
            factor, m, radius = "q", spec.q, spec.b
            other_label, other_dim, other_radius = "p", spec.p, spec.a
        else:
            factor, m, radius = "p", spec.p, spec.a
            other_label, other_dim, other_radius = "q", spec.q, spec.b
        other_volume = sphere_volume(other_dim, other_radius)
        blocks = [
            OrbitBlock(factor, m - 1, True),
            OrbitBlock(other_label, other_dim, False),
        ]
    else:
        raise TypeError(f"no zonal grid for {spec!r}")
    blocks = [block for block in blocks if block.multiplicity > 0]

    theta, analysis = cosine_transform(resolution)
    x = np.cos(theta)
    sin_theta = np.sin(theta)
    modes = np.arange(resolution)

    scale = sphere_volume(m - 1) * radius**m * other_volume
    if m % 2 == 0:
        density = fejer_weights(theta) * sin_theta ** (m - 2)
    else:
        density = (math.pi / resolution) * sin_theta ** (m - 1)
    weights = scale * density

    d1 = np.sin(np.outer(theta, modes)) @ (-modes[:, None] * analysis)
    d2 = np.cos(np.outer(theta, modes)) @ (-(modes**2)[:, None] * analysis)
    reduced = d1 / (radius * sin_theta[:, None])
    divergence = (sin_theta[:, None] * d1 + m * np.diag(x)) / radius
    lap = divergence @ reduced
    orbit = x[:, None] * reduced / radius
    radial = d2 / radius**2

    alpha = 0.5 * (m - 2)
    raw = np.column_stack([eval_jacobi(k, alpha, alpha, x) for k in modes])
    basis = raw / np.sqrt(scale * _jacobi_norms(resolution, alpha))
    eigenvalues = -modes * (modes + m - 1) / radius**2

    symmetry = SymmetryClass(
        kind="zonal",
        radial_factor=factor,
        radial_dimension=m,
        length_scale=radius,
        blocks=tuple(blocks),
    )
    return _freeze(
        CollocationGrid(
            spec=spec,
            symmetry_class=symmetry,
            nodes=theta,
            coordinate=x,
            quad_weights=weights,
            D1=d1,
            D2=d2,
            gradient=d1 / radius,
            reduced_gradient=reduced,
            divergence=divergence,
            gradient_weight=sin_theta**2,
            laplacian_matrix=lap,
            orbit_matrix=orbit,
            radial_hessian=radial,
            basis=basis,
            eigenvalues=eigenvalues.astype(float),
        )
    )


def _periodic_grid(spec: FlatTorus, resolution: int) -> CollocationGrid:
    period = spec.period
    x = period * np.arange(resolution) / resolution
    weights = np.full(resolution, period**spec.n / resolution)
    kappa = 2.0 * math.pi / period

    columns = [np.ones(resolution)]
    derivatives = [np.zeros(resolution)]
    eigenvalues = [0.0]
    for k in range(1, (resolution - 1) // 2 + 1):
        columns += [np.cos(k * kappa * x), np.sin(k * kappa * x)]
        derivatives += [
            -k * kappa * np.sin(k * kappa * x),
            k * kappa * np.cos(k * kappa * x),
        ]
        eigenvalues += [-((k * kappa) ** 2)] * 2
    if resolution % 2 == 0:
        # Nyquist mode: its sine partner vanishes on the grid
        k = resolution // 2
        columns.append(np.cos(k * kappa * x))
        derivatives.append(np.zeros(resolution))
        eigenvalues.append(-((k * kappa) ** 2))

    raw = np.column_stack(columns)
    raw_dx = np.column_stack(derivatives)
    norms = np.sqrt(np.einsum("j,jk->k", weights, raw**2))
    basis = raw / norms
    analysis = basis.T * weights
    dx = (raw_dx / norms) @ analysis
    lap = dx @ dx

    symmetry = SymmetryClass(
        kind="periodic",
        radial_factor="T",
        radial_dimension=1,
        length_scale=period / (2.0 * math.pi),
        blocks=(OrbitBlock("T", spec.n - 1, False),),
    )
    return _freeze(
        CollocationGrid(
            spec=spec,
            symmetry_class=symmetry,
            nodes=x,
            coordinate=x,
            quad_weights=weights,
            D1=dx,
            D2=lap,
            gradient=dx,
            reduced_gradient=dx,
            divergence=dx,
            gradient_weight=np.ones(resolution),
            laplacian_matrix=lap,
            orbit_matrix=np.zeros_like(lap),
            radial_hessian=lap,
            basis=basis,
            eigenvalues=np.asarray(eigenvalues),
        )
    )


def _freeze(grid: CollocationGrid) -> CollocationGrid:
    for name in (
        "nodes",
        "coordinate",
        "quad_weights",
        "D1",
        "D2",
        "gradient",
        "reduced_gradient",
        "divergence",
        "gradient_weight",
        "laplacian_matrix",
        "orbit_matrix",
        "radial_hessian",
        "basis",
        "eigenvalues",
    ):
        getattr(grid, name).setflags(write=False)
    return grid


def _finite(f: npt.ArrayLike) -> Array:
    values = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("node values must be finite")
    return values
