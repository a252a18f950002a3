"""Exception types raised by paneitzlab."""

from __future__ import annotations

from typing import TYPE_CHECKING, Any, Dict, Optional

if TYPE_CHECKING:
    from paneitzlab.continuation.state import ContinuationState


class PaneitzLabError(Exception):
    """Base class for all library errors."""


class InvalidBackgroundError(PaneitzLabError, ValueError):
    """A background specification violates its type invariants."""


class ResolutionError(PaneitzLabError, ValueError):
    """Requested grid resolution is outside the supported range."""


class NonPositiveFactorError(PaneitzLabError, ValueError):
    """A conformal factor has a non-positive node value."""


class WindowError(PaneitzLabError, ValueError):
    """A numeric parameter lies outside its admissible open window."""

    def __init__(self, name: str, value: float, lower: float, upper: float, n: int):
        self.name = name
        self.value = value
        self.lower = lower
        self.upper = upper
        super().__init__(
            f"{name}={value:g} must lie in ({lower:.6g}, {upper:.6g}) for n={n}"
        )


class PreconditionError(PaneitzLabError):
    """An operation was called on inputs that fail its precondition."""

    def __init__(self, message: str, field_minimum: Optional[float] = None):
        self.field_minimum = field_minimum
        super().__init__(message)


class NotWeightedSymmetricError(PaneitzLabError):
    """An eigen-solve was requested for an operator not flagged weighted-symmetric."""


class InfeasibleStartError(PaneitzLabError):
    """No positive-scalar-curvature starting point exists for a constrained search."""


class DimensionError(PaneitzLabError, ValueError):
    """The requested feature is unavailable in this dimension."""


class ContinuationError(PaneitzLabError):
    """Base class for Newton and path failures."""

    def __init__(
        self,
        message: str,
        state: Optional["ContinuationState"] = None,
        context: Optional[Dict[str, Any]] = None,
    ):
        self.state = state
        self.context = context or {}
        super().__init__(message)


class NonConvergence(ContinuationError):
    """Newton iterations exhausted without reaching tolerance."""


class PositivityLost(ContinuationError):
    """Every damped step left the positive cone or the J-positive region."""


class SingularLinearization(ContinuationError):
    """The linearized operator is numerically singular."""


class PathStuck(ContinuationError):
    """Step size fell below the floor; ``state`` is the last accepted state."""


class LinearizationIndefinite(ContinuationError):
    """Positivity hypotheses hold but the linearized form is not positive."""
