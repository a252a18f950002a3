"""Synchronous handler that appends every event to a JSONL file."""

import json
import logging
import threading
from datetime import datetime
from pathlib import Path
from typing import Optional, Union

from paneitzlab.messages.events import Event
from paneitzlab.observability.handlers.base_sync import SyncObservabilityHandler

logger = logging.getLogger(__name__)


class SyncFileEventHandler(SyncObservabilityHandler):
    def __init__(self, log_dir: Union[str, Path] = "logs", filename: Optional[str] = None):
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        if filename is None:
            filename = f"events_{datetime.now().strftime('%Y%m%d_%H%M%S')}.jsonl"
        self.log_file = self.log_dir / filename
        self._file_lock = threading.Lock()
        logger.info(f"Logging events to: {self.log_file}")

    def handle(self, event: Event) -> None:
        line = json.dumps(self.event_to_dict(event), default=str)
        with self._file_lock:
            with open(self.log_file, "a", encoding="utf-8") as f:
                f.write(line + "\n")
