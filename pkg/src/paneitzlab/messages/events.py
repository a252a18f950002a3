"""Events published while tasks run.

Events record things that have happened; any number of handlers may observe
each one.
"""

import inspect
import uuid
from dataclasses import dataclass, field
from datetime import datetime
from types import FrameType
from typing import Any, Dict, Optional

from paneitzlab import RunID
from paneitzlab.messages.commands import Command, CommandResult


@dataclass
class Event:
    """Base class for all events."""

    event_id: str = field(default_factory=lambda: str(uuid.uuid4()))
    timestamp: str = field(default_factory=lambda: datetime.now().isoformat())
    metadata: Dict[str, Any] = field(default_factory=dict)
    run_id: RunID = field(default_factory=lambda: RunID("BUS"))

    def __post_init__(self) -> None:
        tmp: Optional[Any] = inspect.currentframe()
        frame: Optional[FrameType] = tmp.f_back if tmp is not None else None
        # dataclass subclasses call through their generated __init__
        while frame is not None and frame.f_code.co_name == "__init__":
            frame = frame.f_back
        if frame:
            module = frame.f_globals.get("__name__", "unknown")
            self.metadata["emitted_from"] = (
                f"{module}.{frame.f_code.co_name}:{frame.f_lineno}"
            )
        else:
            self.metadata["emitted_from"] = "unknown"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "event_id": self.event_id,
            "timestamp": self.timestamp,
            "metadata": self.metadata,
            "run_id": self.run_id,
        }


@dataclass
class EventHandlerFailedEvent(Event):
    event: Optional[Event] = None
    handler: Optional[str] = None
    exception: Optional[Exception] = None


@dataclass
class CommandStartedEvent(Event):
    command: Optional[Command] = None


@dataclass
class CommandResultEvent(Event):
    command_result: Optional[CommandResult] = None


@dataclass
class TaskStartedEvent(Event):
    task: str = ""
    background: str = ""
    resolution: int = 0


@dataclass
class TaskCompletedEvent(Event):
    task: str = ""
    success: bool = False
    checks_passed: int = 0
    checks_total: int = 0
    duration_seconds: float = 0.0


@dataclass
class PathStateAccepted(Event):
    """One accepted continuation state; ``row`` holds the CSV stream columns."""

    row: Dict[str, float] = field(default_factory=dict)
    newton_iterations: int = 0
    step: float = 0.0


@dataclass
class PathStepRejected(Event):
    lam_from: float = 0.0
    lam_to: float = 0.0
    reason: str = ""
    next_step: float = 0.0


@dataclass
class PathFinished(Event):
    states: int = 0
    final_lambda: float = 0.0
    min_q: float = 0.0
    min_r: float = 0.0


@dataclass
class QuotientConverged(Event):
    name: str = ""
    value: float = 0.0
    iterations: int = 0
    converged: bool = False
