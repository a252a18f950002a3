"""Experiment configuration: one validated document per run.

Every numeric parameter is checked against the window of the module that
consumes it before anything is dispatched, and the window bounds appear in the
error text.
"""

import hashlib
import json
import math
import os
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union, get_args

import numpy as np
import numpy.typing as npt
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from paneitzlab.continuation.diagnostics import check_q
from paneitzlab.continuation.solver import check_dimension
from paneitzlab.continuation.state import PathConfig
from paneitzlab.geometry.background import (
    BackgroundManifold,
    FlatTorus,
    RoundSphere,
    SphereProduct,
)
from paneitzlab.geometry.grid import MAX_RESOLUTION, MIN_RESOLUTION, CollocationGrid
from paneitzlab.invariants.starter import check_p

SCHEMA_VERSION = 1
OUT_DIR_ENV = "PANEITZLAB_OUT_DIR"

TaskName = Literal[
    "curvature", "covariance-test", "invariants", "starter", "continue", "identities"
]
TASK_NAMES: Tuple[str, ...] = get_args(TaskName)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RoundSphereConfig(_Strict):
    kind: Literal["round_sphere"] = "round_sphere"
    n: int = 6
    radius: float = 1.0

    def build(self) -> RoundSphere:
        return RoundSphere(self.n, self.radius)


class FlatTorusConfig(_Strict):
    kind: Literal["flat_torus"] = "flat_torus"
    n: int = 6
    period: float = 2.0 * math.pi

    def build(self) -> FlatTorus:
        return FlatTorus(self.n, self.period)


class SphereProductConfig(_Strict):
    kind: Literal["sphere_product"] = "sphere_product"
    p: int = 2
    a: float = 1.0
    q: int = 4
    b: float = 1.0
    radial_factor: Literal["p", "q"] = "q"

    def build(self) -> SphereProduct:
        return SphereProduct(self.p, self.a, self.q, self.b, self.radial_factor)


BackgroundConfig = Annotated[
    Union[RoundSphereConfig, FlatTorusConfig, SphereProductConfig],
    Field(discriminator="kind"),
]


class FactorConfig(_Strict):
    """u = constant + amplitude * cos(mode theta), used by the curvature and covariance tasks."""

    constant: float = 1.0
    amplitude: float = 0.0
    mode: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _positive(self) -> "FactorConfig":
        if not self.constant - abs(self.amplitude) > 0.0:
            raise ValueError(
                f"factor must stay positive: need |amplitude| < constant, got "
                f"constant={self.constant}, amplitude={self.amplitude}"
            )
        return self

    def values(self, grid: CollocationGrid) -> npt.NDArray[np.float64]:
        return self.constant + self.amplitude * grid.mode_profile(self.mode)


class PerturbationConfig(_Strict):
    """Background conformal perturbation 1 + amplitude * cos(mode theta)."""

    amplitude: float = 0.0
    mode: int = Field(default=1, ge=1)

    @field_validator("amplitude")
    @classmethod
    def _amplitude_window(cls, v: float) -> float:
        if not 0.0 <= v < 1.0:
            raise ValueError(f"perturbation amplitude must lie in [0, 1), got {v}")
        return v


class PathOverrides(_Strict):
    initial_step_fraction: float = Field(default=0.05, gt=0.0, le=1.0)
    min_step: float = Field(default=1e-4, gt=0.0)
    max_newton_iters: int = Field(default=12, ge=1)

    def path_config(self, q: float, alpha: float) -> PathConfig:
        return PathConfig(
            initial_step_fraction=self.initial_step_fraction,
            min_step=self.min_step,
            max_newton_iters=self.max_newton_iters,
            q=q,
            alpha=alpha,
        )


class ExperimentConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    name: Optional[str] = None
    task: TaskName
    background: BackgroundConfig = Field(default_factory=RoundSphereConfig)
    resolution: int = 48
    factor: FactorConfig = Field(default_factory=FactorConfig)
    perturbation: PerturbationConfig = Field(default_factory=PerturbationConfig)
    p: Optional[float] = None
    q: float = 0.8
    alpha: float = 2.0
    delta: float = Field(default=0.125, gt=0.0, lt=4.0)
    path: PathOverrides = Field(default_factory=PathOverrides)
    seed: int = 0
    out_dir: Path = Path("runs")

    @field_validator("resolution")
    @classmethod
    def _resolution_window(cls, v: int) -> int:
        if not MIN_RESOLUTION <= v <= MAX_RESOLUTION:
            raise ValueError(
                f"resolution must lie in [{MIN_RESOLUTION}, {MAX_RESOLUTION}], got {v}"
            )
        return v

    @model_validator(mode="after")
    def _windows(self) -> "ExperimentConfig":
        n = self.background_spec().dimension
        if self.p is not None:
            check_p(n, self.p)
        if self.task == "continue":
            check_dimension(n, 4.0 - self.delta)
            check_q(n, self.q)
        return self

    def background_spec(self) -> BackgroundManifold:
        return self.background.build()

    @property
    def run_name(self) -> str:
        """The given name, or a readable prefix plus a digest of every run parameter."""
        if self.name:
            return self.name
        payload = self.model_dump_json(exclude={"name", "out_dir"})
        digest = hashlib.sha1(payload.encode("utf-8")).hexdigest()[:8]
        return (
            f"{self.task}-{self.background.kind}-N{self.resolution}-s{self.seed}-{digest}"
        )


def resolve_out_dir(config: ExperimentConfig, override: Optional[Path] = None) -> Path:
    """--out beats the environment, which beats the config file."""
    if override is not None:
        return override
    load_dotenv()
    env = os.environ.get(OUT_DIR_ENV)
    return Path(env) if env else config.out_dir


def load_config_data(path: Path) -> Union[Dict[str, Any], List[Dict[str, Any]]]:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, (dict, list)):
        raise ValueError(f"{path} must hold a JSON object or a list of objects")
    return data
