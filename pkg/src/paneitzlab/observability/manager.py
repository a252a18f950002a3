"""Observability manager called directly by the bus for every published event."""

import logging
from typing import List

from paneitzlab.messages.events import Event

logger = logging.getLogger(__name__)


class ObservabilityHandler:
    """Synchronous observer of bus events."""

    def handle(self, event: Event) -> None:
        raise NotImplementedError

    def close(self) -> None:
        """Release files or other resources held by the handler."""


class ObservabilityManager:
    def __init__(self) -> None:
        self._handlers: List[ObservabilityHandler] = []
        self._enabled = True

    def register_handler(self, handler: ObservabilityHandler) -> None:
        if handler not in self._handlers:
            self._handlers.append(handler)
            logger.debug(f"Registered observability handler: {handler.__class__.__name__}")

    def unregister_handler(self, handler: ObservabilityHandler) -> None:
        if handler in self._handlers:
            self._handlers.remove(handler)

    def observe_event(self, event: Event) -> None:
        if not self._enabled:
            return
        for handler in self._handlers:
            try:
                handler.handle(event)
            except Exception as e:
                # observers never break a run
                logger.error(
                    f"Error in observability handler {handler.__class__.__name__}: {e}",
                    exc_info=True,
                )

    def set_enabled(self, enabled: bool) -> None:
        self._enabled = enabled

    def close(self) -> None:
        for handler in self._handlers:
            handler.close()

    def clear_handlers(self) -> None:
        self.close()
        self._handlers.clear()

    @property
    def handler_count(self) -> int:
        return len(self._handlers)
