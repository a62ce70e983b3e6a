"""Replay checks over finished traces.

Each check walks the trace on its own and returns human-readable problem
lines; an empty list means the property holds.
"""
from __future__ import annotations

from typing import Iterable

from .handlers import HandlerState, is_legal
from .trace import EventKind, EventTrace, TraceEvent

_ENDS_RUN = {HandlerState.COMPLETED.value, HandlerState.BLOCKED.value,
             HandlerState.FAILED_OOM.value, HandlerState.DROPPED.value}


def _where(event: TraceEvent) -> str:
    return f"{event.kind.value} {event.task}#{event.job}/{event.node} at {event.time_us}us"


def check_ordering(trace: Iterable[TraceEvent]) -> list[str]:
    problems, last = [], None
    for event in trace:
        if last is not None and event.time_us < last:
            problems.append(f"{_where(event)} goes back in time")
        last = event.time_us
    return problems


def check_horizon(trace: Iterable[TraceEvent], horizon_us: int) -> list[str]:
    return [f"{_where(e)} is past the horizon" for e in trace if e.time_us > horizon_us]


def check_causality(trace: Iterable[TraceEvent]) -> list[str]:
    released, problems = set(), []
    for event in trace:
        if event.job is None:
            continue
        if event.kind is EventKind.RELEASE:
            released.add(event.job_key)
        elif event.job_key not in released:
            problems.append(f"{_where(event)} precedes the job's release")
    return problems


def check_fsm(trace: Iterable[TraceEvent]) -> list[str]:
    states, problems = {}, []
    for event in trace:
        if event.kind is not EventKind.STATE:
            continue
        key = (event.task, event.job, event.node)
        source, target = event.payload["from"], event.payload["to"]
        current = states.get(key, HandlerState.CREATED.value)
        if source != current:
            problems.append(f"{_where(event)} leaves {source} but the handler is {current}")
        if not is_legal(source, target):
            problems.append(f"{_where(event)}: {source} -> {target} is not a legal transition")
        states[key] = target
    return problems


def check_precedence(trace: Iterable[TraceEvent]) -> list[str]:
    preds, resolved, problems = {}, set(), []
    for event in trace:
        key = event.job_key
        if event.kind is EventKind.RELEASE:
            preds[key] = {}
            for u, v in event.payload.get("edges", ()):
                preds[key].setdefault(v, []).append(u)
        elif event.kind in (EventKind.COMPLETE, EventKind.DROP):
            resolved.add((key, event.node))
        elif event.kind is EventKind.DISPATCH:
            waiting = [u for u in preds.get(key, {}).get(event.node, ()) if (key, u) not in resolved]
            if waiting:
                problems.append(f"{_where(event)} before {', '.join(waiting)} finished")
    return problems


def check_non_preemption(trace: Iterable[TraceEvent]) -> list[str]:
    """A new dispatch group never starts while another one is still on the accelerator."""
    running, problems = None, []
    members = {}
    for event in trace:
        ident = (event.task, event.job, event.node)
        if event.kind is EventKind.DISPATCH:
            if event.payload.get("role") == "leader":
                if running is not None:
                    problems.append(f"{_where(event)} while {running} is still running")
                running = event.payload.get("group")
            members[ident] = event.payload.get("group")
        elif event.kind is EventKind.STATE and event.payload.get("from") == HandlerState.RUNNING.value \
                and event.payload.get("to") in _ENDS_RUN:
            group = members.pop(ident, None)
            if group is not None and group == running and group not in members.values():
                running = None
    return problems


def check_dispatch_bracketing(trace: Iterable[TraceEvent]) -> list[str]:
    """Every dispatch ends in a completion, a drop, or a block or failure transition."""
    open_runs = {}
    for event in trace:
        ident = (event.task, event.job, event.node)
        if event.kind is EventKind.DISPATCH:
            open_runs[ident] = event
        elif event.kind in (EventKind.COMPLETE, EventKind.DROP):
            open_runs.pop(ident, None)
        elif event.kind is EventKind.STATE and event.payload.get("to") in (
                HandlerState.BLOCKED.value, HandlerState.FAILED_OOM.value):
            open_runs.pop(ident, None)
    return [f"{_where(event)} never finished" for event in open_runs.values()]


def check_edf(trace: Iterable[TraceEvent]) -> list[str]:
    """Every dispatch leader had the smallest (deadline, release, node, job) key among ready entries."""
    releases, ready, problems = {}, {}, []
    just_started = {}
    for event in trace:
        ident = (event.task, event.job, event.node)
        if event.kind is EventKind.RELEASE:
            releases[event.job_key] = event.time_us
        elif event.kind is EventKind.REASSIGN:
            for node, deadline in event.payload.get("deadlines", {}).items():
                key = (event.task, event.job, node)
                if key in ready:
                    ready[key] = deadline
        elif event.kind is EventKind.STATE:
            if event.payload["to"] == HandlerState.READY.value:
                ready[ident] = event.payload.get("deadline_us")
            elif event.payload["from"] == HandlerState.READY.value:
                deadline = ready.pop(ident, None)
                if event.payload["to"] == HandlerState.RUNNING.value:
                    just_started[ident] = deadline
        elif event.kind is EventKind.DISPATCH and event.payload.get("role") == "leader":
            deadline = just_started.pop(ident, event.payload.get("deadline_us"))
            mine = (deadline, releases[event.job_key], event.node, (event.task, event.job))
            others = [
                (d, releases[(task, job)], node, (task, job))
                for (task, job, node), d in ready.items() if d is not None
            ]
            if others and min(others) < mine:
                problems.append(f"{_where(event)} skipped an entry with an earlier deadline")
    return problems


def check_compute_saving(trace: Iterable[TraceEvent]) -> list[str]:
    """A merged execution costs its longest member plus the surcharge per extra member."""
    problems = []
    for event in trace:
        if event.kind is not EventKind.DISPATCH:
            continue
        payload = event.payload
        surcharge = payload.get("surcharge_us", 0)
        for key_costs, key_total in (("member_costs", "cost_us"), ("piece_costs", "node_cost_us")):
            costs = payload.get(key_costs)
            if not costs or len(costs) < 2:
                continue
            if payload.get("mode") == "batch" and key_costs == "member_costs":
                continue
            expected = max(costs) + surcharge * (len(costs) - 1)
            if payload[key_total] != expected:
                problems.append(f"{_where(event)} merged cost {payload[key_total]}us, expected {expected}us")
    return problems


def accelerator_busy_us(trace: Iterable[TraceEvent]) -> int:
    """Accelerator time spent on executions, dispatch overheads and synchronizations."""
    busy = 0
    for event in trace:
        if event.kind is EventKind.DISPATCH and event.payload.get("role") == "leader":
            busy += event.payload["cost_us"] + (event.payload["start_us"] - event.time_us)
        elif event.kind is EventKind.SYNC:
            busy += event.payload.get("cost_us", 0)
    return busy


def replay_violations(trace: EventTrace, horizon_us: int | None = None) -> list[str]:
    problems = (
        check_ordering(trace)
        + check_causality(trace)
        + check_fsm(trace)
        + check_precedence(trace)
        + check_non_preemption(trace)
        + check_dispatch_bracketing(trace)
        + check_edf(trace)
        + check_compute_saving(trace)
    )
    if horizon_us is not None:
        problems += check_horizon(trace, horizon_us)
    return problems
