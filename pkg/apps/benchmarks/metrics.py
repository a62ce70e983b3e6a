"""Evaluation metrics computed from event traces alone.

An *instance* is one original node of one job; its outcome is decided by
the refined node that finishes it (the decoder of a split node). Jobs and
instances cut off by the simulation horizon are censored: they appear in
no rate and no response statistic.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from apps.dags.exceptions import MalformedTrace
from apps.scheduling.checks import accelerator_busy_us
from apps.scheduling.trace import EventKind, TraceEvent

HORIZON = "horizon"


class Outcome:
    ON_TIME = "on_time"
    LATE = "late"
    DROPPED = "dropped"
    CENSORED = "censored"


@dataclass(frozen=True)
class QoEParams:
    lam: float = 1.0
    time_unit_us: int = 1_000_000

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.time_unit_us <= 0:
            raise ValueError("time unit must be > 0")


def qoe_score(exec_us: float, slack_us: float, params: QoEParams) -> float:
    """1 / (1 + e^lambda * overshoot); overshoot is max(0, exec - slack) in the params' time unit."""
    if exec_us < 0:
        raise ValueError("execution time must be >= 0")
    overshoot = max(0.0, exec_us - slack_us) / params.time_unit_us
    return 1.0 / (1.0 + math.exp(params.lam) * overshoot)


class Instance(NamedTuple):
    task: str
    job: int
    node: str
    release_us: int
    outcome: str
    deadline_us: int | None = None
    dispatch_us: int | None = None
    finish_us: int | None = None
    reason: str | None = None

    @property
    def key(self) -> str:
        return f"{self.task}/{self.node}"


class JobRecord(NamedTuple):
    task: str
    job: int
    release_us: int
    deadline_us: int
    outcome: str
    finish_us: int | None = None

    @property
    def response_us(self) -> int | None:
        return None if self.finish_us is None else self.finish_us - self.release_us


def _walk(trace: Iterable[TraceEvent]):
    releases, tracked, sinks, deadlines = {}, {}, {}, {}
    dispatched, outcomes = {}, {}
    for event in trace:
        key = event.job_key
        if event.kind is EventKind.RELEASE:
            releases[key] = event.time_us
            tracked[key] = dict(event.payload.get("tracked", {}))
            sinks[key] = tuple(event.payload.get("sinks", ()))
            deadlines[key] = event.payload.get("deadline_us")
            continue
        if event.kind not in (EventKind.DISPATCH, EventKind.COMPLETE, EventKind.DROP):
            continue
        if key not in releases:
            raise MalformedTrace(f"{event.kind.value} for {event.task}#{event.job} before its release")
        if event.kind is EventKind.DISPATCH:
            dispatched[(key, event.node)] = event.time_us
        elif event.kind is EventKind.COMPLETE:
            outcome = Outcome.LATE if event.payload.get("late") else Outcome.ON_TIME
            outcomes[(key, event.node)] = (outcome, event.time_us, event.payload.get("deadline_us"), None)
        else:
            reason = event.payload.get("reason")
            outcome = Outcome.CENSORED if reason == HORIZON else Outcome.DROPPED
            outcomes[(key, event.node)] = (outcome, event.time_us, event.payload.get("deadline_us"), reason)
    return releases, tracked, sinks, deadlines, dispatched, outcomes


def instances(trace: Iterable[TraceEvent]) -> list[Instance]:
    releases, tracked, _, _, dispatched, outcomes = _walk(trace)
    found = []
    for key in sorted(releases):
        for origin, piece in sorted(tracked[key].items()):
            if (key, piece) not in outcomes:
                raise MalformedTrace(f"{key[0]}#{key[1]}/{origin} never resolved")
            outcome, finish, deadline, reason = outcomes[(key, piece)]
            found.append(Instance(key[0], key[1], origin, releases[key], outcome, deadline,
                                  dispatched.get((key, piece)), finish, reason))
    return found


def jobs(trace: Iterable[TraceEvent]) -> list[JobRecord]:
    """Job outcomes: completed when every sink completed, dropped when any sink was dropped."""
    releases, _, sinks, deadlines, _, outcomes = _walk(trace)
    records = []
    for key in sorted(releases):
        results = [outcomes.get((key, sink)) for sink in sinks[key]]
        if any(result is None for result in results):
            raise MalformedTrace(f"{key[0]}#{key[1]} has an unresolved sink")
        kinds = {result[0] for result in results}
        finish = max((result[1] for result in results), default=releases[key])
        if Outcome.CENSORED in kinds:
            outcome, finish = Outcome.CENSORED, None
        elif Outcome.DROPPED in kinds:
            outcome, finish = Outcome.DROPPED, None
        elif deadlines[key] is not None and finish > deadlines[key]:
            outcome = Outcome.LATE
        else:
            outcome = Outcome.ON_TIME
        records.append(JobRecord(key[0], key[1], releases[key], deadlines[key], outcome, finish))
    return records


@dataclass
class Rates:
    released: int = 0
    on_time: int = 0
    late: int = 0
    dropped: int = 0
    censored: int = 0

    def add(self, outcome: str) -> None:
        if outcome == Outcome.CENSORED:
            self.censored += 1
            return
        self.released += 1
        if outcome == Outcome.LATE:
            self.late += 1
        elif outcome == Outcome.DROPPED:
            self.dropped += 1
        else:
            self.on_time += 1

    def _fraction(self, count: int) -> float:
        return count / self.released if self.released else 0.0

    @property
    def miss_rate(self) -> float:
        return self._fraction(self.late)

    @property
    def drop_rate(self) -> float:
        return self._fraction(self.dropped)

    @property
    def on_time_rate(self) -> float:
        return self._fraction(self.on_time)

    @property
    def combined_rate(self) -> float:
        return self._fraction(self.late + self.dropped)

    def to_dict(self) -> dict:
        return {
            **asdict(self),
            "miss_rate": self.miss_rate,
            "drop_rate": self.drop_rate,
            "combined_rate": self.combined_rate,
        }


def miss_drop_rates(trace: Iterable[TraceEvent] | Sequence[Instance]) -> tuple[Rates, dict[str, Rates]]:
    """Overall rates and a per ``task/node`` breakdown; late and dropped are disjoint."""
    items = trace if _is_instances(trace) else instances(trace)
    overall, per_node = Rates(), {}
    for item in items:
        overall.add(item.outcome)
        per_node.setdefault(item.key, Rates()).add(item.outcome)
    return overall, dict(sorted(per_node.items()))


def _is_instances(items) -> bool:
    return isinstance(items, (list, tuple)) and bool(items) and isinstance(items[0], Instance)


@dataclass
class ResponseStats:
    count: int = 0
    dropped: int = 0
    mean_ms: float | None = None
    p50_ms: float | None = None
    p95_ms: float | None = None
    p99_ms: float | None = None
    max_ms: float | None = None


def response_times_ms(trace: Iterable[TraceEvent]) -> list[float]:
    return [record.response_us / 1000 for record in jobs(trace)
            if record.outcome in (Outcome.ON_TIME, Outcome.LATE)]


def response_stats(trace: Iterable[TraceEvent]) -> ResponseStats:
    records = jobs(trace)
    times = np.array([r.response_us / 1000 for r in records if r.outcome in (Outcome.ON_TIME, Outcome.LATE)])
    dropped = sum(1 for r in records if r.outcome == Outcome.DROPPED)
    if not times.size:
        return ResponseStats(dropped=dropped)
    p50, p95, p99 = np.percentile(times, [50, 95, 99])
    return ResponseStats(
        count=int(times.size),
        dropped=dropped,
        mean_ms=float(times.mean()),
        p50_ms=float(p50),
        p95_ms=float(p95),
        p99_ms=float(p99),
        max_ms=float(times.max()),
    )


def histogram(trace_or_times, bucket_width_ms: float) -> dict[tuple[float, float], int]:
    """Completed-job response times counted in [k*w, (k+1)*w) buckets."""
    if bucket_width_ms <= 0:
        raise ValueError("bucket width must be > 0")
    if isinstance(trace_or_times, (list, tuple, np.ndarray)) and not _has_events(trace_or_times):
        times = np.asarray(trace_or_times, dtype=float)
    else:
        times = np.asarray(response_times_ms(trace_or_times), dtype=float)
    counts = Counter(np.floor(times / bucket_width_ms).astype(int).tolist())
    return {(k * bucket_width_ms, (k + 1) * bucket_width_ms): counts[k] for k in sorted(counts)}


def _has_events(items) -> bool:
    return len(items) > 0 and isinstance(items[0], TraceEvent)


def node_qoe(items: Sequence[Instance], params: QoEParams) -> float | None:
    """Mean score over completed instances; slack runs from dispatch to the node deadline."""
    scores = [
        qoe_score(i.finish_us - i.dispatch_us, i.deadline_us - i.dispatch_us, params)
        for i in items
        if i.outcome in (Outcome.ON_TIME, Outcome.LATE) and i.dispatch_us is not None
    ]
    return float(np.mean(scores)) if scores else None


def job_qoe(records: Sequence[JobRecord], params: QoEParams) -> float | None:
    scores = [
        qoe_score(r.response_us, r.deadline_us - r.release_us, params)
        for r in records
        if r.outcome in (Outcome.ON_TIME, Outcome.LATE)
    ]
    return float(np.mean(scores)) if scores else None


@dataclass
class MetricsReport:
    scenario: str = ""
    policy: str = ""
    seed: int = 0
    variant: str = ""
    response: ResponseStats = field(default_factory=ResponseStats)
    rates: Rates = field(default_factory=Rates)
    per_node: dict[str, Rates] = field(default_factory=dict)
    job_rates: Rates = field(default_factory=Rates)
    qoe: dict[str, float | None] = field(default_factory=dict)
    qoe_job: dict[str, float | None] = field(default_factory=dict)
    sync_events: int = 0
    busy_ms: float = 0.0
    events: int = 0

    @property
    def miss_rate(self) -> float:
        return self.rates.miss_rate

    @property
    def drop_rate(self) -> float:
        return self.rates.drop_rate

    def qoe_at(self, lam: float) -> float | None:
        """Node-level QoE for one lambda of the grid."""
        return self.qoe.get(lambda_label(lam))

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "policy": self.policy,
            "seed": self.seed,
            "variant": self.variant,
            "response": asdict(self.response),
            "rates": self.rates.to_dict(),
            "per_node": {key: rates.to_dict() for key, rates in self.per_node.items()},
            "job_rates": self.job_rates.to_dict(),
            "qoe": dict(self.qoe),
            "qoe_job": dict(self.qoe_job),
            "sync_events": self.sync_events,
            "busy_ms": self.busy_ms,
            "events": self.events,
        }


def lambda_label(lam: float) -> str:
    return f"{lam:g}"


def compute_report(trace, *, lambdas: Sequence[float] = (0.001, 0.01, 0.1, 1, 10),
                   time_unit_us: int = 1_000_000, scenario: str = "", policy: str = "",
                   seed: int = 0, variant: str = "") -> MetricsReport:
    """Everything a comparison row needs, derived from the trace alone."""
    events = list(trace)
    items = instances(events)
    records = jobs(events)
    overall, per_node = miss_drop_rates(items) if items else (Rates(), {})
    job_rates = Rates()
    for record in records:
        job_rates.add(record.outcome)
    qoe, qoe_job = {}, {}
    for lam in lambdas:
        params = QoEParams(lam, time_unit_us)
        qoe[lambda_label(lam)] = node_qoe(items, params)
        qoe_job[lambda_label(lam)] = job_qoe(records, params)
    return MetricsReport(
        scenario=scenario,
        policy=policy,
        seed=seed,
        variant=variant,
        response=response_stats(events),
        rates=overall,
        per_node=per_node,
        job_rates=job_rates,
        qoe=qoe,
        qoe_job=qoe_job,
        sync_events=sum(1 for e in events if e.kind is EventKind.SYNC),
        busy_ms=accelerator_busy_us(events) / 1000,
        events=len(events),
    )
