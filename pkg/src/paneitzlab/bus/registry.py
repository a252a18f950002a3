"""Handler registry: one command handler per command type, ordered event handlers.

Handlers are scoped by ``RunID``. Handlers registered under the ``BUS`` scope
serve every run; run-scoped handlers are looked up first.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Awaitable, Callable, Dict, List, Optional, Set, Type

from paneitzlab import RunID
from paneitzlab.messages.commands import Command, CommandResult
from paneitzlab.messages.events import Event

logger = logging.getLogger(__name__)

BUS_SCOPE = RunID("BUS")

AsyncCommandHandler = Callable[[Command], Awaitable[CommandResult]]
AsyncEventHandler = Callable[[Event], Awaitable[None]]


class HandlerPriority:
    """Lower numbers run first."""

    HIGHEST = 0
    HIGH = 10
    NORMAL = 50
    LOW = 90
    LOWEST = 100


@dataclass
class EventHandlerEntry:
    handler: AsyncEventHandler
    priority: int = HandlerPriority.NORMAL

    def __lt__(self, other: "EventHandlerEntry") -> bool:
        return self.priority < other.priority


class HandlerRegistry:
    def __init__(self) -> None:
        self._command_handlers: Dict[RunID, Dict[Type[Command], AsyncCommandHandler]] = (
            defaultdict(dict)
        )
        self._event_handlers: Dict[RunID, Dict[Type[Event], List[EventHandlerEntry]]] = (
            defaultdict(lambda: defaultdict(list))
        )

    def register_command_handler(
        self,
        command_type: Type[Command],
        handler: AsyncCommandHandler,
        run_id: RunID = BUS_SCOPE,
    ) -> None:
        if command_type in self._command_handlers[run_id]:
            raise ValueError(
                f"Command handler for {command_type.__name__} already registered "
                f"in scope {run_id}"
            )
        self._command_handlers[run_id][command_type] = handler
        logger.debug(f"Registered command handler for {command_type.__name__} in {run_id}")

    def register_event_handler(
        self,
        event_type: Type[Event],
        handler: AsyncEventHandler,
        run_id: RunID = BUS_SCOPE,
        priority: int = HandlerPriority.NORMAL,
    ) -> None:
        handlers = self._event_handlers[run_id][event_type]
        handlers.append(EventHandlerEntry(handler=handler, priority=priority))
        handlers.sort()

    def get_command_handler(
        self, command_type: Type[Command], run_id: RunID
    ) -> Optional[AsyncCommandHandler]:
        handler = self._command_handlers.get(run_id, {}).get(command_type)
        if handler is None and run_id != BUS_SCOPE:
            handler = self._command_handlers.get(BUS_SCOPE, {}).get(command_type)
        return handler

    def get_event_handlers(self, event_type: Type[Event], run_id: RunID) -> List[AsyncEventHandler]:
        """Handlers for ``event_type`` and its base classes, in priority order."""
        entries: List[EventHandlerEntry] = []
        scopes = [run_id] if run_id == BUS_SCOPE else [run_id, BUS_SCOPE]
        for scope in scopes:
            registered = self._event_handlers.get(scope, {})
            for cls in event_type.__mro__:
                entries.extend(registered.get(cls, []))
        entries.sort()
        return [entry.handler for entry in entries]

    def unregister_run(self, run_id: RunID) -> None:
        if run_id == BUS_SCOPE:
            logger.warning("Cannot unregister BUS scope handlers")
            return
        self._command_handlers.pop(run_id, None)
        self._event_handlers.pop(run_id, None)

    def get_all_runs(self) -> Set[RunID]:
        return set(self._command_handlers) | set(self._event_handlers)

    def get_handler_stats(self) -> Dict[str, int]:
        return {
            "total_runs": len(self.get_all_runs()),
            "total_command_handlers": sum(
                len(handlers) for handlers in self._command_handlers.values()
            ),
            "total_event_handlers": sum(
                sum(len(h) for h in handlers.values())
                for handlers in self._event_handlers.values()
            ),
        }
