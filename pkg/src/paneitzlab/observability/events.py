"""Log levels shared by the bootstrap and the observability handlers."""

import logging
from enum import Enum


class LogLevel(Enum):
    DEBUG = "debug"
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"
    CRITICAL = "critical"

    @property
    def logging_level(self) -> int:
        return getattr(logging, self.name)
