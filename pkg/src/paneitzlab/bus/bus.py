"""Message bus that runs task commands and fans events out to handlers.

Handlers are coroutines; numerical work is pushed to worker threads with
``asyncio.to_thread``, and events raised inside those threads are handed back
to the bus loop through ``thread_publisher``.
"""

import asyncio
import logging
import traceback
from collections import deque
from typing import Any, Callable, Deque, Dict, Optional, Type, TypeVar, Union, cast

from paneitzlab import RunID
from paneitzlab.bus.metrics import Timer, get_metrics_collector
from paneitzlab.bus.registry import (
    BUS_SCOPE,
    AsyncCommandHandler,
    AsyncEventHandler,
    HandlerPriority,
    HandlerRegistry,
)
from paneitzlab.messages.commands import Command, CommandResult
from paneitzlab.messages.events import (
    CommandResultEvent,
    CommandStartedEvent,
    Event,
    EventHandlerFailedEvent,
)
from paneitzlab.observability.manager import ObservabilityManager

logger = logging.getLogger(__name__)

T = TypeVar("T")

MAX_HANDLER_ERRORS = 1000


class MessageBus:
    """Dispatches each command to its single handler and each event to all of its handlers."""

    def __init__(
        self,
        registry: Optional[HandlerRegistry] = None,
        observability: Optional[ObservabilityManager] = None,
    ) -> None:
        self._registry = registry or HandlerRegistry()
        self._observability = observability
        self._suppress_event_errors = True
        self.event_handler_errors: Deque[Exception] = deque(maxlen=MAX_HANDLER_ERRORS)
        self._error_count = 0

    # --- Handler Registration ---

    def register_command_handler(
        self,
        command_type: Type[Command],
        handler: Union[AsyncCommandHandler, Callable[[Command], CommandResult]],
        run_id: RunID = BUS_SCOPE,
    ) -> None:
        if not asyncio.iscoroutinefunction(handler):
            handler = self._wrap_sync_command_handler(
                cast(Callable[[Command], CommandResult], handler)
            )
        self._registry.register_command_handler(
            command_type, cast(AsyncCommandHandler, handler), run_id
        )

    def register_event_handler(
        self,
        event_type: Type[Event],
        handler: Union[AsyncEventHandler, Callable[[Event], None]],
        run_id: RunID = BUS_SCOPE,
        priority: int = HandlerPriority.NORMAL,
    ) -> None:
        if not asyncio.iscoroutinefunction(handler):
            handler = self._wrap_sync_event_handler(cast(Callable[[Event], None], handler))
        self._registry.register_event_handler(
            event_type, cast(AsyncEventHandler, handler), run_id, priority
        )

    def unregister_run_handlers(self, run_id: RunID) -> None:
        self._registry.unregister_run(run_id)

    # --- Command Execution ---

    async def execute(self, command: Command) -> CommandResult:
        """Run a command; handler exceptions come back as a failed result."""
        metrics = get_metrics_collector()
        command_type = type(command)
        metrics.inc_counter("commands_sent_total")

        handler = self._registry.get_command_handler(command_type, command.run_id)
        if handler is None:
            error_msg = f"No handler registered for command {command_type.__name__}"
            logger.error(error_msg)
            metrics.inc_counter("commands_failed_total")
            return CommandResult(
                success=False, command_id=command.command_id, error=error_msg
            )

        await self.publish(CommandStartedEvent(command=command, run_id=command.run_id))
        try:
            with Timer(metrics, "task_duration_seconds"):
                result = await handler(command)
        except Exception as e:
            logger.exception(f"Error executing command {command_type.__name__}: {e}")
            result = CommandResult(
                success=False,
                command_id=command.command_id,
                error=f"{type(e).__name__}: {e!s}",
                metadata={"traceback": traceback.format_exc()},
                run_id=command.run_id,
            )
        metrics.inc_counter(
            "commands_processed_total" if result.success else "commands_failed_total"
        )
        await self.publish(CommandResultEvent(command_result=result, run_id=command.run_id))
        return result

    # --- Event Publishing ---

    async def publish(self, event: Event) -> None:
        """Observe the event, then await every handler registered for it."""
        get_metrics_collector().inc_counter("events_published_total")
        if self._observability:
            self._observability.observe_event(event)

        handlers = self._registry.get_event_handlers(type(event), event.run_id)
        if not handlers:
            return
        results = await asyncio.gather(
            *(handler(event) for handler in handlers), return_exceptions=True
        )
        for handler, result in zip(handlers, results):
            if isinstance(result, Exception):
                await self._handle_event_error(event, handler, result)

    def thread_publisher(self) -> Callable[[Event], None]:
        """A callback that publishes from a worker thread and waits for the handlers."""
        loop = asyncio.get_running_loop()

        def publish(event: Event) -> None:
            asyncio.run_coroutine_threadsafe(self.publish(event), loop).result()

        return publish

    async def run_in_worker(self, func: Callable[..., T], *args: Any) -> T:
        return await asyncio.to_thread(func, *args)

    async def _handle_event_error(
        self, event: Event, handler: AsyncEventHandler, error: Exception
    ) -> None:
        self.event_handler_errors.append(error)
        self._error_count += 1
        handler_name = getattr(handler, "__qualname__", repr(handler))
        logger.error(
            f"Error in handler '{handler_name}' for {type(event).__name__}: {error}"
        )
        if not self._suppress_event_errors:
            raise error
        if isinstance(event, EventHandlerFailedEvent):
            return
        await self.publish(
            EventHandlerFailedEvent(
                event=event, handler=handler_name, exception=error, run_id=event.run_id
            )
        )

    # --- Configuration ---

    def set_observability_manager(self, observability: ObservabilityManager) -> None:
        self._observability = observability

    def suppress_event_errors(self) -> None:
        self._suppress_event_errors = True

    def unsuppress_event_errors(self) -> None:
        self._suppress_event_errors = False

    def get_stats(self) -> Dict[str, Any]:
        return {
            "error_suppression": self._suppress_event_errors,
            "total_errors": self._error_count,
            "retained_errors": len(self.event_handler_errors),
            **self._registry.get_handler_stats(),
        }

    # --- Helper Methods ---

    def _wrap_sync_command_handler(
        self, handler: Callable[[Command], CommandResult]
    ) -> AsyncCommandHandler:
        async def async_wrapper(command: Command) -> CommandResult:
            return handler(command)

        async_wrapper.function = handler  # type: ignore[attr-defined]
        return async_wrapper

    def _wrap_sync_event_handler(self, handler: Callable[[Event], None]) -> AsyncEventHandler:
        async def async_wrapper(event: Event) -> None:
            handler(event)

        async_wrapper.function = handler  # type: ignore[attr-defined]
        return async_wrapper
