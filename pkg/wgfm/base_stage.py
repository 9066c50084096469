"""
wgfm - Base Stage
Abstract base class for pipeline stages.
"""
import logging
from abc import ABC, abstractmethod
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

from .event_bus import Event, EventBus, EventType, event_bus


class BaseStage(ABC):
    """
    Abstract base class for stages.
    Provides lifecycle management and event emission.
    """

    def __init__(self, name: str, event_bus_instance: Optional[EventBus] = None):
        """
        Initialize the stage.

        Args:
            name: Unique name for this stage
            event_bus_instance: Optional custom event bus (uses global by default)
        """
        self.name = name
        self.event_bus = event_bus_instance or event_bus
        self.logger = logging.getLogger(f"wgfm.{name}")
        self._running = False
        self._started_at: Optional[datetime] = None

    @property
    def uptime(self) -> Optional[float]:
        """Stage uptime in seconds."""
        if not self._started_at:
            return None
        return (datetime.now(timezone.utc) - self._started_at).total_seconds()

    async def start(self) -> None:
        """Start the stage and register event handlers."""
        if self._running:
            return

        self._running = True
        self._started_at = datetime.now(timezone.utc)

        await self._register_handlers()
        await self._on_start()
        await self.emit(EventType.STAGE_STARTED, {"stage": self.name})
        self.logger.debug("Stage started")

    async def stop(self) -> None:
        """Stop the stage."""
        if not self._running:
            return

        await self._on_stop()
        self._running = False
        await self.emit(EventType.STAGE_STOPPED, {"stage": self.name, "uptime": self.uptime})
        self.logger.debug("Stage stopped")

    async def emit(self, event_type: EventType, data: dict) -> None:
        """
        Emit an event from this stage.

        Args:
            event_type: The type of event
            data: Event data payload
        """
        await self.event_bus.publish(Event(
            event_type=event_type,
            data=data,
            source_stage=self.name,
        ))

    async def artifact(self, path: Path, role: str) -> Path:
        """Announce a written file."""
        await self.emit(EventType.ARTIFACT_WRITTEN, {"path": str(path), "role": role})
        self.logger.info("Wrote %s", path)
        return path

    async def metrics(self, values: Dict[str, Any]) -> None:
        """Announce recorded metric values."""
        await self.emit(EventType.METRIC_RECORDED, {"metrics": dict(values)})

    def subscribe(self, event_type: EventType, handler) -> None:
        self.event_bus.subscribe(event_type, handler)

    async def _register_handlers(self) -> None:
        """Register event handlers. Override in subclasses that listen."""
        pass

    async def _on_start(self) -> None:
        """Called when the stage starts."""
        pass

    async def _on_stop(self) -> None:
        """Called when the stage stops."""
        pass

    @abstractmethod
    async def run(self) -> Any:
        """Execute the stage."""
