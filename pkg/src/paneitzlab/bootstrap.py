"""Wiring for a lab session: logging, observability handlers and the message bus."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from paneitzlab.bus.bus import MessageBus
from paneitzlab.messages.commands import RunTaskCommand
from paneitzlab.observability.events import LogLevel
from paneitzlab.observability.handlers import SyncConsoleEventHandler, SyncFileEventHandler
from paneitzlab.observability.manager import ObservabilityManager
from paneitzlab.ui.cli.tasks import TaskRunner

logger = logging.getLogger(__name__)


def setup_basic_logging(level: LogLevel = LogLevel.INFO) -> None:
    """Configure the root logger once; later calls only adjust the level."""
    logging.basicConfig(
        level=level.logging_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    logging.getLogger().setLevel(level.logging_level)
    logger.debug(f"Basic logging configured with level {level.value}")


@dataclass
class LabConfig:
    name: str = "paneitzlab"
    log_level: LogLevel = LogLevel.INFO
    enable_console_handler: bool = True
    enable_file_handler: bool = False
    file_handler_log_dir: Path = Path("logs")
    file_handler_log_filename: Optional[str] = None


class LabBootstrap:
    """Owns the bus and observability manager of one CLI invocation or test."""

    def __init__(self, config: Optional[LabConfig] = None):
        self.config = config or LabConfig()
        setup_basic_logging(self.config.log_level)
        self.observability = ObservabilityManager()
        self.message_bus = MessageBus(observability=self.observability)
        self._bootstrapped = False

    def bootstrap(self) -> MessageBus:
        if self._bootstrapped:
            return self.message_bus
        self._register_observability_handlers()
        self._register_command_handlers()
        self._bootstrapped = True
        logger.debug(f"{self.config.name} bootstrap completed")
        return self.message_bus

    def shutdown(self) -> None:
        self.observability.clear_handlers()

    def _register_observability_handlers(self) -> None:
        if self.config.enable_console_handler:
            self.observability.register_handler(SyncConsoleEventHandler())
        if self.config.enable_file_handler:
            self.observability.register_handler(
                SyncFileEventHandler(
                    log_dir=self.config.file_handler_log_dir,
                    filename=self.config.file_handler_log_filename,
                )
            )

    def _register_command_handlers(self) -> None:
        runner = TaskRunner(self.message_bus)
        self.message_bus.register_command_handler(RunTaskCommand, runner.handle)
