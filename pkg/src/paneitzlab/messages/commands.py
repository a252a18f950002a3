"""Commands sent on the message bus.

A command asks for one task to be run; exactly one handler answers it with a
``CommandResult``.
"""

import inspect
import uuid
from dataclasses import dataclass, field
from datetime import datetime
from types import FrameType
from typing import Any, Dict, Optional

from paneitzlab import RunID


@dataclass
class Command:
    """Base class for all commands."""

    command_id: str = field(default_factory=lambda: str(uuid.uuid4()))
    timestamp: str = field(default_factory=lambda: datetime.now().isoformat())
    metadata: Dict[str, Any] = field(default_factory=dict)
    run_id: RunID = field(default_factory=lambda: RunID("BUS"))


@dataclass
class CommandResult:
    """Result of a command execution."""

    success: bool
    command_id: str = field(default_factory=lambda: str(uuid.uuid4()))
    timestamp: str = field(default_factory=lambda: datetime.now().isoformat())
    result: Optional[Any] = None
    error: Optional[str] = None
    metadata: Dict[str, Any] = field(default_factory=dict)
    run_id: RunID = field(default_factory=lambda: RunID("BUS"))

    def __post_init__(self) -> None:
        tmp: Optional[Any] = inspect.currentframe()
        frame: Optional[FrameType] = tmp.f_back if tmp is not None else None
        if frame:
            module = frame.f_globals.get("__name__", "unknown")
            self.metadata["finished_in"] = (
                f"{module}.{frame.f_code.co_name}:{frame.f_lineno}"
            )
        else:
            self.metadata["finished_in"] = "unknown"


@dataclass
class RunTaskCommand(Command):
    """Run one experiment task; ``config`` is a validated ``ExperimentConfig``."""

    config: Any = None
