"""Event publication for catalog mutations.

Every successful mutation publishes exactly one envelope to an in-process
pluggable sink; delivery is at-most-once and a publish failure never fails
the mutation (it is logged and dropped). Real brokers are a deployment
concern behind this seam.
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Protocol, Union

from .catalog import now_iso

log = logging.getLogger(__name__)

EVENT_TYPES = (
    "collection.created",
    "images.added",
    "localization.verified",
    "localization.rejected",
)


@dataclass(frozen=True)
class EventEnvelope:
    event_type: str
    subject: str  # uuid of the mutated entity
    timestamp: str
    actor: str

    def __post_init__(self):
        if self.event_type not in EVENT_TYPES:
            raise ValueError(f"unknown event type: {self.event_type}")

    @classmethod
    def now(cls, event_type: str, subject: str, actor: str) -> "EventEnvelope":
        return cls(event_type=event_type, subject=subject,
                   timestamp=now_iso(), actor=actor)


class EventSink(Protocol):
    def publish(self, envelope: EventEnvelope) -> None: ...


class NullSink:
    def publish(self, envelope: EventEnvelope) -> None:
        pass


class StdoutSink:
    def publish(self, envelope: EventEnvelope) -> None:
        sys.stdout.write(json.dumps(asdict(envelope), sort_keys=True) + "\n")


class FileSink:
    """Appends one JSON line per event."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    def publish(self, envelope: EventEnvelope) -> None:
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(asdict(envelope), sort_keys=True) + "\n")


class CollectingSink:
    """Test sink: keeps envelopes in memory."""

    def __init__(self):
        self.events: list[EventEnvelope] = []

    def publish(self, envelope: EventEnvelope) -> None:
        self.events.append(envelope)


def safe_publish(sink: EventSink, envelope: EventEnvelope) -> None:
    """At-most-once delivery: failures are logged, never raised."""
    try:
        sink.publish(envelope)
    except Exception as exc:
        log.warning("dropped event %s for %s: %s",
                    envelope.event_type, envelope.subject, exc)


def sink_from_spec(spec: str) -> EventSink:
    """``none`` | ``stdout`` | a file path (JSON lines)."""
    if spec in ("", "none"):
        return NullSink()
    if spec == "stdout":
        return StdoutSink()
    return FileSink(spec)
