"""Event trace recorded by the simulator.

Events are appended in processing order, which is also timestamp order.
Each event is an immutable record; the trace exports to JSON lines (one
event per line) and to a per-node CSV summary.
"""
from __future__ import annotations

import hashlib
import io
import json
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, NamedTuple

import pandas as pd

from apps.dags.exceptions import MalformedTrace


class EventKind(str, Enum):
    RELEASE = "release"
    DISPATCH = "dispatch"
    COMPLETE = "complete"
    MISS = "miss"
    DROP = "drop"
    MUTATION = "mutation"
    REASSIGN = "reassign"
    SYNC = "sync"
    STATE = "state"


class TraceEvent(NamedTuple):
    time_us: int
    kind: EventKind
    task: str | None = None
    job: int | None = None
    node: str | None = None
    payload: Mapping = MappingProxyType({})

    @property
    def job_key(self) -> tuple[str, int] | None:
        return (self.task, self.job) if self.job is not None else None

    def to_dict(self) -> dict:
        return {
            "t": self.time_us,
            "kind": self.kind.value,
            "task": self.task,
            "job": self.job,
            "node": self.node,
            "payload": _plain(self.payload),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TraceEvent":
        try:
            return cls(
                int(data["t"]),
                EventKind(data["kind"]),
                data.get("task"),
                data.get("job"),
                data.get("node"),
                _freeze(data.get("payload") or {}),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise MalformedTrace(f"bad trace record {data!r}: {exc}") from exc


def _freeze(value):
    if isinstance(value, Mapping):
        return MappingProxyType({k: _freeze(v) for k, v in value.items()})
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    return value


def _plain(value):
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        return [_plain(v) for v in value]
    if isinstance(value, Enum):
        return value.value
    return value


class EventTrace:
    def __init__(self, events: Iterable[TraceEvent] = ()):
        self._events = list(events)

    def __iter__(self) -> Iterator[TraceEvent]:
        return iter(self._events)

    def __len__(self):
        return len(self._events)

    def __getitem__(self, index):
        return self._events[index]

    def __eq__(self, other):
        return isinstance(other, EventTrace) and self._events == other._events

    def record(self, time_us: int, kind: EventKind, task=None, job=None, node=None, **payload) -> TraceEvent:
        if self._events and time_us < self._events[-1].time_us:
            raise MalformedTrace(f"{kind.value} at {time_us}us recorded after {self._events[-1].time_us}us")
        event = TraceEvent(time_us, kind, task, job, node, _freeze(payload))
        self._events.append(event)
        return event

    def of_kind(self, *kinds: EventKind) -> list[TraceEvent]:
        return [event for event in self._events if event.kind in kinds]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(event.to_dict(), sort_keys=True) + "\n" for event in self._events)

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, lines: Iterable[str]) -> "EventTrace":
        events = []
        for number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedTrace(f"line {number}: {exc}") from exc
            events.append(TraceEvent.from_dict(data))
        return cls(events)

    @classmethod
    def read_jsonl(cls, path) -> "EventTrace":
        with open(path, encoding="utf-8") as handle:
            return cls.from_jsonl(handle)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode()).hexdigest()

    def node_summary(self) -> pd.DataFrame:
        """One row per node instance: dispatch, completion and outcome times in ms."""
        rows = {}
        for event in self._events:
            if event.node is None or event.job is None:
                continue
            key = (event.task, event.job, event.node)
            if event.kind is EventKind.DISPATCH:
                row = rows.setdefault(key, {"outcome": "pending"})
                row.setdefault("dispatch_ms", event.time_us / 1000)
                row["deadline_ms"] = event.payload.get("deadline_us", 0) / 1000
            elif event.kind is EventKind.COMPLETE:
                row = rows.setdefault(key, {})
                row["complete_ms"] = event.time_us / 1000
                row["outcome"] = "late" if event.payload.get("late") else "on_time"
            elif event.kind is EventKind.DROP:
                row = rows.setdefault(key, {})
                row["drop_ms"] = event.time_us / 1000
                row["outcome"] = "dropped"
                row["reason"] = event.payload.get("reason")
        records = [
            {"task": task, "job": job, "node": node, **row}
            for (task, job, node), row in sorted(rows.items())
        ]
        columns = ["task", "job", "node", "dispatch_ms", "deadline_ms", "complete_ms",
                   "drop_ms", "outcome", "reason"]
        return pd.DataFrame.from_records(records, columns=columns)

    def write_csv(self, path) -> None:
        self.node_summary().to_csv(path, index=False)

    def csv_text(self) -> str:
        buffer = io.StringIO()
        self.node_summary().to_csv(buffer, index=False)
        return buffer.getvalue()
