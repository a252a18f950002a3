"""Dense operators on grid nodes and their weighted eigenproblems."""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
import numpy.typing as npt
from scipy import linalg

from paneitzlab.errors import NotWeightedSymmetricError

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

SYMMETRY_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """A discretized linear operator together with the inner product it lives in.

    ``entries`` act on node values. ``weights`` are the quadrature weights of the
    metric named by ``metric_tag``. ``form`` is the assembled weak form
    (f^T form h = <M f, h>_w); without one, W M itself is used once it passes the
    symmetry measurement. ``basis`` spans the resolved functions the symmetry
    measurement and the spectrum are taken on; without one, all node functions count.
    """

    name: str
    entries: Array
    weights: Array
    metric_tag: str
    dimension: int
    form: Optional[Array] = None
    basis: Optional[Array] = None

    def __post_init__(self) -> None:
        self.entries.setflags(write=False)
        if self.form is not None:
            self.form.setflags(write=False)

    def apply(self, f: npt.ArrayLike) -> Array:
        return self.entries @ np.asarray(f, dtype=float)

    def inner(self, f: npt.ArrayLike, h: npt.ArrayLike) -> float:
        return float(np.dot(self.weights, np.asarray(f) * np.asarray(h)))

    def quadratic_form(self, f: npt.ArrayLike) -> float:
        values = np.asarray(f, dtype=float)
        if self.form is not None:
            return float(values @ self.form @ values)
        return self.inner(self.apply(values), values)

    @cached_property
    def resolved(self) -> Array:
        if self.basis is not None:
            return self.basis
        return np.diag(1.0 / np.sqrt(self.weights))

    @cached_property
    def weighted_symmetry_defect(self) -> float:
        """max |<M b_i, b_j>_w - <b_i, M b_j>_w| over the resolved basis, relative."""
        B = self.resolved
        pairings = B.T @ (self.weights[:, None] * (self.entries @ B))
        scale = float(np.max(np.abs(pairings)))
        if scale == 0.0:
            return 0.0
        return float(np.max(np.abs(pairings - pairings.T))) / scale

    @property
    def weighted_symmetric(self) -> bool:
        return self.weighted_symmetry_defect <= SYMMETRY_TOLERANCE

    @cached_property
    def weak_form(self) -> Array:
        if self.form is not None:
            return self.form
        if not self.weighted_symmetric:
            raise NotWeightedSymmetricError(
                f"{self.name} on {self.metric_tag} is not weighted-symmetric "
                f"(defect {self.weighted_symmetry_defect:.3g}) and carries no weak form"
            )
        weighted = self.weights[:, None] * self.entries
        return 0.5 * (weighted + weighted.T)

    @cached_property
    def galerkin(self) -> Tuple[Array, Array]:
        """Weak form and Gram matrix restricted to the resolved basis."""
        B = self.resolved
        return B.T @ self.weak_form @ B, B.T @ (self.weights[:, None] * B)

    @cached_property
    def eigenvalues(self) -> Array:
        """Ritz values of the weak form on the resolved basis, ascending."""
        return linalg.eigh(*self.galerkin, eigvals_only=True)

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    def symmetry_defect(self, f: npt.ArrayLike, h: npt.ArrayLike) -> float:
        """|<M f, h> - <f, M h>| relative to the larger of the two."""
        left = self.inner(self.apply(f), h)
        right = self.inner(f, self.apply(h))
        return abs(left - right) / max(abs(left), abs(right), 1e-300)


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: Array
    eigenfunctions: Array

    @property
    def lowest_eigenfunction(self) -> Array:
        return self.eigenfunctions[:, 0]


def spectrum(M: OperatorMatrix, k: int) -> Spectrum:
    """The k smallest eigenvalues of M in its weighted inner product, ascending.

    k is clamped to the size of the resolved basis. Eigenfunctions are returned
    as node values, unit in the weighted L^2 norm.
    """
    if not M.weighted_symmetric:
        raise NotWeightedSymmetricError(
            f"{M.name} on {M.metric_tag} is not weighted-symmetric "
            f"(defect {M.weighted_symmetry_defect:.3g})"
        )
    size = M.resolved.shape[1]
    k = max(1, min(k, size))
    values, vectors = linalg.eigh(*M.galerkin, subset_by_index=[0, k - 1])
    functions = M.resolved @ vectors
    signs = np.where(functions.sum(axis=0) < 0, -1.0, 1.0)
    functions = functions * signs
    logger.debug(f"Spectrum of {M.name}: lowest eigenvalue {values[0]:.10g}")
    return Spectrum(eigenvalues=values, eigenfunctions=functions)


def rayleigh_quotient(M: OperatorMatrix, f: npt.ArrayLike) -> float:
    values = np.asarray(f, dtype=float)
    denominator = M.inner(values, values)
    if denominator == 0.0:
        raise ValueError("Rayleigh quotient of the zero function")
    return M.quadratic_form(values) / denominator
