"""Model backgrounds with closed-form curvature.

Three families are supported: round spheres, flat tori and products of two round
spheres. All of them are locally symmetric with parallel Ricci tensor, so the
Schouten tensor is constant on each factor and ``Q`` reduces to its algebraic part.
"""

import logging
import math
from dataclasses import dataclass
from typing import Literal, Tuple, Union

from paneitzlab.errors import InvalidBackgroundError

logger = logging.getLogger(__name__)

MIN_DIMENSION = 5


def sphere_volume(k: int, radius: float = 1.0) -> float:
    """Volume of the round k-sphere of the given radius."""
    return 2.0 * math.pi ** ((k + 1) / 2) / math.gamma((k + 1) / 2) * radius**k


@dataclass(frozen=True)
class RoundSphere:
    """Round sphere S^n(radius)."""

    n: int
    radius: float = 1.0

    def __post_init__(self) -> None:
        _check_dimension(self.n)
        _check_length("radius", self.radius)

    @property
    def dimension(self) -> int:
        return self.n

    @property
    def label(self) -> str:
        return f"S^{self.n}({self.radius:g})"


@dataclass(frozen=True)
class FlatTorus:
    """Flat torus R^n / (period Z)^n."""

    n: int
    period: float = 2.0 * math.pi

    def __post_init__(self) -> None:
        _check_dimension(self.n)
        _check_length("period", self.period)

    @property
    def dimension(self) -> int:
        return self.n

    @property
    def label(self) -> str:
        return f"T^{self.n}({self.period:g})"


@dataclass(frozen=True)
class SphereProduct:
    """Product S^p(a) x S^q(b).

    ``radial_factor`` names the factor whose polar angle carries the
    cohomogeneity-one coordinate.
    """

    p: int
    a: float
    q: int
    b: float
    radial_factor: Literal["p", "q"] = "q"

    def __post_init__(self) -> None:
        if self.p < 1 or self.q < 1:
            raise InvalidBackgroundError(
                f"sphere product needs p >= 1 and q >= 1, got p={self.p}, q={self.q}"
            )
        _check_dimension(self.p + self.q)
        _check_length("a", self.a)
        _check_length("b", self.b)
        if self.radial_factor not in ("p", "q"):
            raise InvalidBackgroundError(
                f"radial_factor must be 'p' or 'q', got {self.radial_factor!r}"
            )

    @property
    def dimension(self) -> int:
        return self.p + self.q

    @property
    def label(self) -> str:
        return f"S^{self.p}({self.a:g})xS^{self.q}({self.b:g})"


BackgroundManifold = Union[RoundSphere, FlatTorus, SphereProduct]


@dataclass(frozen=True)
class SchoutenBlock:
    """Schouten eigenvalue on one factor of the background."""

    label: str
    multiplicity: int
    value: float


@dataclass(frozen=True)
class BackgroundCurvature:
    """Closed-form curvature constants of a model background."""

    n: int
    R0: float
    J0: float
    A_blocks: Tuple[SchoutenBlock, ...]
    absA2: float
    sigma2: float
    Q0: float

    def block(self, label: str) -> SchoutenBlock:
        for entry in self.A_blocks:
            if entry.label == label:
                return entry
        raise KeyError(f"no Schouten block labelled {label!r}")


def make_background(spec: BackgroundManifold) -> BackgroundCurvature:
    """Evaluate R, J, A, |A|^2, sigma_2(A) and Q of a model background."""
    n = spec.dimension
    # Ricci eigenvalue per factor: (label, multiplicity, Ric)
    if isinstance(spec, RoundSphere):
        factors = [("S", n, (n - 1) / spec.radius**2)]
    elif isinstance(spec, FlatTorus):
        factors = [("T", n, 0.0)]
    elif isinstance(spec, SphereProduct):
        factors = [
            ("p", spec.p, (spec.p - 1) / spec.a**2),
            ("q", spec.q, (spec.q - 1) / spec.b**2),
        ]
    else:
        raise InvalidBackgroundError(f"unknown background {spec!r}")

    R0 = sum(mult * ric for _, mult, ric in factors)
    J0 = R0 / (2.0 * (n - 1))
    blocks = tuple(
        SchoutenBlock(label, mult, (ric - J0) / (n - 2)) for label, mult, ric in factors
    )
    absA2 = sum(block.multiplicity * block.value**2 for block in blocks)
    sigma2 = 0.5 * (J0**2 - absA2)
    Q0 = -2.0 * absA2 + 0.5 * n * J0**2

    logger.debug(f"Background {spec.label}: R={R0:g} J={J0:g} Q={Q0:g}")
    return BackgroundCurvature(
        n=n, R0=R0, J0=J0, A_blocks=blocks, absA2=absA2, sigma2=sigma2, Q0=Q0
    )


def background_volume(spec: BackgroundManifold) -> float:
    """Closed-form volume of the background."""
    if isinstance(spec, RoundSphere):
        return sphere_volume(spec.n, spec.radius)
    if isinstance(spec, FlatTorus):
        return spec.period**spec.n
    return sphere_volume(spec.p, spec.a) * sphere_volume(spec.q, spec.b)


def _check_dimension(n: int) -> None:
    if n < MIN_DIMENSION:
        raise InvalidBackgroundError(
            f"dimension must be at least {MIN_DIMENSION}, got n={n}"
        )


def _check_length(name: str, value: float) -> None:
    if not (value > 0 and math.isfinite(value)):
        raise InvalidBackgroundError(f"{name} must be a positive real, got {value!r}")
