"""Trace recording: the ordered stream of protocol-observable events a run
emits.  Events are plain dicts with integer-nanosecond times and a monotone
tiebreak counter, so the canonical encoding of a trace is byte-reproducible
and byte equality is trace equality."""

from __future__ import annotations

from typing import Any, BinaryIO, Iterable

from . import codec


class Tracer:
    """Collects events in memory; the runner stamps time, the tracer stamps
    the tiebreak sequence."""

    def __init__(self, clock):
        self._clock = clock
        self.events: list[dict] = []

    def emit(self, kind: str, **fields: Any) -> None:
        event = {"t": self._clock(), "q": len(self.events), "k": kind}
        event.update(fields)
        self.events.append(event)


def write_trace(fh: BinaryIO, events: Iterable[dict]) -> None:
    for event in events:
        codec.write_record(fh, event)


def read_trace(fh: BinaryIO) -> list[dict]:
    return list(codec.read_records(fh))


def trace_bytes(events: Iterable[dict]) -> bytes:
    return b"".join(codec.encode(event) for event in events)
