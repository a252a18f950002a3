"""Run reports: config echo, task results and named tolerance checks."""

import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field

from paneitzlab import __version__
from paneitzlab.ui.cli.config import SCHEMA_VERSION, ExperimentConfig

Comparison = Literal["at_most", "above", "at_least"]


class CheckResult(BaseModel):
    """One tolerance check; ``invariant`` names the property it instantiates."""

    name: str
    invariant: str
    measured: float
    tolerance: float
    comparison: Comparison = "at_most"
    passed: bool


def check(
    name: str,
    invariant: str,
    measured: float,
    tolerance: float,
    comparison: Comparison = "at_most",
) -> CheckResult:
    measured = float(measured)
    if comparison == "at_most":
        passed = measured <= tolerance
    elif comparison == "above":
        passed = measured > tolerance
    else:
        passed = measured >= tolerance
    return CheckResult(
        name=name,
        invariant=invariant,
        measured=measured,
        tolerance=tolerance,
        comparison=comparison,
        passed=bool(passed),
    )


class ErrorPayload(BaseModel):
    type: str
    message: str
    context: Dict[str, Any] = Field(default_factory=dict)


class Timing(BaseModel):
    started_at: str
    duration_seconds: float


class RunReport(BaseModel):
    schema_version: int = SCHEMA_VERSION
    tool_version: str = __version__
    run_name: str
    task: str
    config: Dict[str, Any]
    results: Dict[str, Any] = Field(default_factory=dict)
    checks: List[CheckResult] = Field(default_factory=list)
    error: Optional[ErrorPayload] = None
    timing: Optional[Timing] = None

    @classmethod
    def start(cls, config: ExperimentConfig) -> "RunReport":
        return cls(
            run_name=config.run_name,
            task=config.task,
            config=config.model_dump(mode="json"),
            timing=Timing(started_at=datetime.now().isoformat(), duration_seconds=0.0),
        )

    @property
    def success(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)

    @property
    def checks_passed(self) -> int:
        return sum(1 for c in self.checks if c.passed)

    def payload(self) -> Dict[str, Any]:
        """Everything except timing; identical configs give identical payloads."""
        return self.model_dump(mode="json", exclude={"timing"})

    def payload_json(self) -> str:
        return json.dumps(self.payload(), sort_keys=True, indent=2)

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2)

    def write(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n", encoding="utf-8")
        return path
