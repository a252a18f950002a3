"""Synchronous observability handlers."""

from paneitzlab.observability.handlers.base_sync import SyncObservabilityHandler
from paneitzlab.observability.handlers.console_sync import SyncConsoleEventHandler
from paneitzlab.observability.handlers.csv_sync import PathCsvHandler
from paneitzlab.observability.handlers.file_sync import SyncFileEventHandler

__all__ = [
    "PathCsvHandler",
    "SyncConsoleEventHandler",
    "SyncFileEventHandler",
    "SyncObservabilityHandler",
]
