from paneitzlab.bus.bus import MessageBus

__all__ = ["MessageBus"]
