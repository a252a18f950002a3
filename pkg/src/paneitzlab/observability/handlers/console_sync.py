"""Console handler that logs one line per event."""

import logging

from paneitzlab.messages.events import (
    Event,
    PathFinished,
    PathStateAccepted,
    PathStepRejected,
    QuotientConverged,
    TaskCompletedEvent,
    TaskStartedEvent,
)
from paneitzlab.observability.handlers.base_sync import SyncObservabilityHandler

logger = logging.getLogger(__name__)


class SyncConsoleEventHandler(SyncObservabilityHandler):
    def handle(self, event: Event) -> None:
        level = logging.DEBUG
        if isinstance(event, TaskStartedEvent):
            level = logging.INFO
            message = (
                f"task {event.task} on {event.background} at resolution {event.resolution}"
            )
        elif isinstance(event, TaskCompletedEvent):
            level = logging.INFO if event.success else logging.WARNING
            message = (
                f"task {event.task}: {event.checks_passed}/{event.checks_total} checks "
                f"passed in {event.duration_seconds:.2f}s"
            )
        elif isinstance(event, PathStateAccepted):
            message = (
                f"lambda={event.row.get('lambda', float('nan')):.6g} "
                f"residual={event.row.get('residual_norm', float('nan')):.3e} "
                f"newton={event.newton_iterations}"
            )
        elif isinstance(event, PathStepRejected):
            message = (
                f"step {event.lam_from:.6g} -> {event.lam_to:.6g} rejected "
                f"({event.reason}), next step {event.next_step:.3g}"
            )
        elif isinstance(event, PathFinished):
            level = logging.INFO
            message = (
                f"path finished after {event.states} states: min Q~={event.min_q:.6g}, "
                f"min R~={event.min_r:.6g}"
            )
        elif isinstance(event, QuotientConverged):
            message = f"{event.name}={event.value:.10g} after {event.iterations} steps"
        else:
            message = f"{type(event).__name__}, ID={event.event_id}"
        logger.log(level, f"[EVENT] {message} (run {event.run_id})")
