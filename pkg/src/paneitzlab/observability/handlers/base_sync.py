"""Base class for synchronous observability handlers."""

import dataclasses
from abc import ABC, abstractmethod
from enum import Enum
from typing import Any, Dict

import numpy as np
from pydantic import BaseModel

from paneitzlab.messages.events import Event
from paneitzlab.observability.manager import ObservabilityHandler


class SyncObservabilityHandler(ObservabilityHandler, ABC):
    @abstractmethod
    def handle(self, event: Event) -> None: ...

    def event_to_dict(self, event: Event) -> Dict[str, Any]:
        """JSON-ready dict of an event, with nested models and arrays converted."""
        data = {
            f.name: self.convert_value(getattr(event, f.name))
            for f in dataclasses.fields(event)
        }
        data["event_type"] = type(event).__name__
        return data

    def convert_value(self, value: Any) -> Any:
        if isinstance(value, Enum):
            return value.value
        if isinstance(value, (str, int, bool, type(None))):
            return value
        if isinstance(value, (float, np.floating)):
            return float(value)
        if isinstance(value, np.integer):
            return int(value)
        if isinstance(value, np.ndarray):
            return value.tolist()
        if isinstance(value, BaseModel):
            return value.model_dump(mode="json")
        if isinstance(value, BaseException):
            return f"{type(value).__name__}: {value}"
        if isinstance(value, dict):
            return {str(k): self.convert_value(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [self.convert_value(item) for item in value]
        if dataclasses.is_dataclass(value) and not isinstance(value, type):
            return {
                f.name: self.convert_value(getattr(value, f.name))
                for f in dataclasses.fields(value)
            }
        return str(value)

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}()"
