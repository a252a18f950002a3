"""Unit tests for the ObservabilityManager."""

from unittest.mock import patch

from paneitzlab.messages.events import Event, PathFinished
from paneitzlab.observability.manager import ObservabilityHandler, ObservabilityManager


class MockHandler(ObservabilityHandler):
    """Mock handler for testing."""

    def __init__(self):
        self.events = []
        self.should_fail = False
        self.closed = False

    def handle(self, event: Event) -> None:
        if self.should_fail:
            raise Exception("Handler error")
        self.events.append(event)

    def close(self) -> None:
        self.closed = True


class TestObservabilityManager:
    """Test suite for ObservabilityManager."""

    def test_register_handler(self):
        manager = ObservabilityManager()
        handler1 = MockHandler()
        handler2 = MockHandler()

        manager.register_handler(handler1)
        manager.register_handler(handler2)
        assert manager.handler_count == 2

        # Duplicate registration should be ignored
        manager.register_handler(handler1)
        assert manager.handler_count == 2

    def test_unregister_handler(self):
        manager = ObservabilityManager()
        handler = MockHandler()
        manager.register_handler(handler)
        manager.unregister_handler(handler)
        assert manager.handler_count == 0

        # Unregistering non-existent handler should be safe
        manager.unregister_handler(handler)
        assert manager.handler_count == 0

    def test_observe_event(self):
        manager = ObservabilityManager()
        handler1 = MockHandler()
        handler2 = MockHandler()
        manager.register_handler(handler1)
        manager.register_handler(handler2)

        event = PathFinished(states=3)
        manager.observe_event(event)

        assert handler1.events == [event]
        assert handler2.events == [event]

    @patch("paneitzlab.observability.manager.logger")
    def test_failing_handler_does_not_stop_others(self, mock_logger):
        manager = ObservabilityManager()
        failing = MockHandler()
        failing.should_fail = True
        working = MockHandler()
        manager.register_handler(failing)
        manager.register_handler(working)

        manager.observe_event(Event())

        assert len(working.events) == 1
        mock_logger.error.assert_called_once()
        assert "MockHandler" in mock_logger.error.call_args[0][0]

    def test_disabled_manager(self):
        manager = ObservabilityManager()
        handler = MockHandler()
        manager.register_handler(handler)

        manager.set_enabled(False)
        manager.observe_event(Event())
        assert handler.events == []

        manager.set_enabled(True)
        manager.observe_event(Event())
        assert len(handler.events) == 1

    def test_clear_handlers_closes_them(self):
        manager = ObservabilityManager()
        handler = MockHandler()
        manager.register_handler(handler)
        manager.clear_handlers()
        assert handler.closed
        assert manager.handler_count == 0
