"""Model backgrounds, collocation grids and conformal metrics."""

from paneitzlab.geometry.background import (
    BackgroundManifold,
    FlatTorus,
    RoundSphere,
    SphereProduct,
    make_background,
)
from paneitzlab.geometry.grid import CollocationGrid, make_grid
from paneitzlab.geometry.metric import ConformalMetric, background_metric

__all__ = [
    "BackgroundManifold",
    "CollocationGrid",
    "ConformalMetric",
    "FlatTorus",
    "RoundSphere",
    "SphereProduct",
    "background_metric",
    "make_background",
    "make_grid",
]
