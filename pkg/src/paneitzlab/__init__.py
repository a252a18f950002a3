"""paneitzlab: conformal geometry numerics on symmetric model manifolds."""

from typing import NewType

__version__ = "0.1.0"

RunID = NewType("RunID", str)

__all__ = ["RunID", "__version__"]
