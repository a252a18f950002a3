"""Continuity path from lambda_0 down to 0."""

from paneitzlab.continuation.solver import ContinuationSolver, newton_correct, run_path
from paneitzlab.continuation.state import ContinuationState, PathConfig

__all__ = ["ContinuationSolver", "ContinuationState", "PathConfig", "newton_correct", "run_path"]
