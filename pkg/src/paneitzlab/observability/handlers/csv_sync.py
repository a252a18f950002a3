"""Streams accepted continuation states to a CSV file, one row per state."""

import csv
import logging
import threading
from pathlib import Path
from typing import IO, Optional, Union

from paneitzlab import RunID
from paneitzlab.continuation.state import CSV_COLUMNS
from paneitzlab.messages.events import Event, PathStateAccepted
from paneitzlab.observability.handlers.base_sync import SyncObservabilityHandler

logger = logging.getLogger(__name__)


class PathCsvHandler(SyncObservabilityHandler):
    """Writes the fixed path columns for ``PathStateAccepted`` events of one run.

    The header is written on creation so that a path that fails before its first
    state still leaves a valid (empty) table.
    """

    def __init__(self, path: Union[str, Path], run_id: Optional[RunID] = None):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.run_id = run_id
        self.rows_written = 0
        self._lock = threading.Lock()
        self._file: Optional[IO[str]] = open(self.path, "w", newline="", encoding="utf-8")
        self._writer = csv.DictWriter(
            self._file, fieldnames=list(CSV_COLUMNS), lineterminator="\r\n"
        )
        self._writer.writeheader()
        self._file.flush()

    def handle(self, event: Event) -> None:
        if not isinstance(event, PathStateAccepted):
            return
        if self.run_id is not None and event.run_id != self.run_id:
            return
        with self._lock:
            if self._file is None:
                logger.warning(f"Path CSV {self.path} already closed, row dropped")
                return
            self._writer.writerow({k: repr(float(event.row[k])) for k in CSV_COLUMNS})
            self._file.flush()
            self.rows_written += 1

    def close(self) -> None:
        with self._lock:
            if self._file is not None:
                self._file.close()
                self._file = None
