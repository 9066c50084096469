"""
wgfm - Event Bus
Pub/Sub channel between pipeline stages and the manifest recorder.
"""
import asyncio
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Callable, Dict, List, Optional
from uuid import uuid4

logger = logging.getLogger("wgfm.event_bus")


class EventType(Enum):
    """Run events."""
    STAGE_STARTED = "stage_started"
    STAGE_STOPPED = "stage_stopped"
    ARTIFACT_WRITTEN = "artifact_written"
    METRIC_RECORDED = "metric_recorded"
    CHECK_COMPLETED = "check_completed"
    STAGE_FAILED = "stage_failed"


@dataclass
class Event:
    """Event object passed between stages."""
    event_type: EventType
    data: Dict[str, Any]
    event_id: str = field(default_factory=lambda: str(uuid4()))
    timestamp: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
    source_stage: Optional[str] = None


class EventBus:
    """
    Central publish/subscribe bus for one process.
    Supports sync and async handlers; handler failures are logged, not raised.
    """

    _instance: Optional["EventBus"] = None

    def __new__(cls) -> "EventBus":
        """Singleton pattern for the process-wide bus."""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if self._initialized:
            return
        self._subscribers: Dict[EventType, List[Callable]] = {}
        self._initialized = True

    def subscribe(self, event_type: EventType, handler: Callable) -> None:
        """
        Subscribe a handler to an event type.

        Args:
            event_type: The type of event to listen for
            handler: Async or sync callable to handle the event
        """
        handlers = self._subscribers.setdefault(event_type, [])
        if handler not in handlers:
            handlers.append(handler)

    def unsubscribe(self, event_type: EventType, handler: Callable) -> None:
        if handler in self._subscribers.get(event_type, []):
            self._subscribers[event_type].remove(handler)

    async def publish(self, event: Event) -> None:
        """
        Publish an event to all subscribers, in subscription order.

        Args:
            event: The event to publish
        """
        for handler in list(self._subscribers.get(event.event_type, [])):
            try:
                if asyncio.iscoroutinefunction(handler):
                    await handler(event)
                else:
                    handler(event)
            except Exception as e:
                logger.error("Error in handler for %s: %s", event.event_type.value, e)

    def reset(self) -> None:
        """Drop every subscriber."""
        self._subscribers.clear()


# Global event bus instance
event_bus = EventBus()
