"""EDF dispatch over intermediate deadlines on one non-preemptive accelerator.

The ``Scheduler`` owns the runtime state of every released job: handler
state machines, the ready queue, intermediate deadlines and cross-task link
bookkeeping. It never advances time; the simulator feeds it events and
pays for the synchronizations it asks for.
"""
from __future__ import annotations

import heapq
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

from apps.dags.deadlines import (
    DEFAULT_QUANTUM_US, DeadlineMap, ProgressSnapshot, WeightMode, absolutize,
    assign_equal, assign_pinned, assign_proportional, reassign,
)
from apps.dags.exceptions import BudgetExhausted, EmptyDag, EmptyReadyQueue, IllegalState, UnknownJob
from apps.dags.graph import DagTask, NodeKind, compute_heights
from apps.dags.refinement import (
    MergeCandidate, RefineConfig, RefinedDag, batch_group, dynamic_merge, piece_costs, refine,
    refined_costs,
)

from .handlers import Handler, HandlerState
from .trace import EventKind, EventTrace, TraceEvent
from .workload import Link

logger = logging.getLogger('scheduling')


class Policy(str, Enum):
    EDF = "EDF"
    RED_FG = "RED-FG"
    RED_IDA = "RED-IDA"
    RED = "RED"

    @property
    def refines(self) -> bool:
        return self is not Policy.EDF

    @property
    def reassigns(self) -> bool:
        return self in (Policy.RED_IDA, Policy.RED)


class SyncMode(str, Enum):
    PERIODIC = "periodic"
    ON_DEMAND = "on_demand"


@dataclass(frozen=True)
class SyncPolicy:
    mode: SyncMode = SyncMode.ON_DEMAND
    interval_us: int = 100_000

    def __post_init__(self):
        object.__setattr__(self, "mode", SyncMode(self.mode))
        if self.mode is SyncMode.PERIODIC and self.interval_us <= 0:
            raise ValueError("periodic sync interval must be > 0")

    @classmethod
    def periodic(cls, interval_us: int) -> "SyncPolicy":
        return cls(SyncMode.PERIODIC, interval_us)

    @classmethod
    def on_demand(cls) -> "SyncPolicy":
        return cls(SyncMode.ON_DEMAND)

    def __str__(self):
        if self.mode is SyncMode.PERIODIC:
            return f"periodic({self.interval_us / 1000:g}ms)"
        return "on_demand"


class DropPolicy(str, Enum):
    DROP_NODE = "drop_node"
    DROP_JOB = "drop_job"
    NEVER = "never"


class DropDecision(str, Enum):
    KEEP = "keep"
    DROP = "drop"


class Assignment(str, Enum):
    PROPORTIONAL = "proportional"
    EQUAL = "equal"


@dataclass(frozen=True)
class SchedulerConfig:
    policy: Policy = Policy.RED
    # None picks the policy's own default: on-demand for RED, periodic otherwise.
    sync: SyncPolicy | None = None
    sync_interval_us: int = 100_000
    sync_cost_us: int = 2_000
    decision_cost_us: int = 500
    blocking_us: int = 0
    drop_policy: DropPolicy = DropPolicy.DROP_NODE
    assignment: Assignment = Assignment.PROPORTIONAL
    weight_mode: WeightMode = WeightMode.MAX
    quantum_us: int = DEFAULT_QUANTUM_US
    merge_across_jobs: bool = True

    def __post_init__(self):
        object.__setattr__(self, "policy", Policy(self.policy))
        object.__setattr__(self, "drop_policy", DropPolicy(self.drop_policy))
        object.__setattr__(self, "assignment", Assignment(self.assignment))
        object.__setattr__(self, "weight_mode", WeightMode(self.weight_mode))
        for name in ("sync_cost_us", "decision_cost_us", "blocking_us"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.sync_interval_us <= 0:
            raise ValueError("sync_interval_us must be > 0")
        if self.quantum_us <= 0:
            raise ValueError("quantum_us must be > 0")

    @property
    def effective_sync(self) -> SyncPolicy:
        if self.sync is not None:
            return self.sync
        if self.policy is Policy.RED:
            return SyncPolicy.on_demand()
        return SyncPolicy.periodic(self.sync_interval_us)

    @property
    def dispatch_overhead_us(self) -> int:
        # re-assigning policies overlap the lock wait with the decision
        if self.policy.reassigns:
            return max(self.decision_cost_us, self.blocking_us)
        return self.decision_cost_us + self.blocking_us

    def with_policy(self, policy: Policy | str) -> "SchedulerConfig":
        return replace(self, policy=Policy(policy))


class JobKey(NamedTuple):
    task: str
    index: int

    def __str__(self):
        return f"{self.task}#{self.index}"


class ReadyEntry(NamedTuple):
    node: str
    job: JobKey
    abs_deadline: int
    release: int

    @property
    def sort_key(self) -> tuple:
        return (self.abs_deadline, self.release, self.node, self.job)

    @property
    def label(self) -> str:
        return f"{self.job}/{self.node}"


def next_task_to_schedule(ready: Iterable[ReadyEntry]) -> ReadyEntry:
    """Earliest absolute deadline first; ties by earlier release, then node id."""
    try:
        return min(ready, key=lambda entry: entry.sort_key)
    except ValueError:
        raise EmptyReadyQueue("no ready entries") from None


def enforce_drop_policy(entry: ReadyEntry, now_us: int,
                        drop_policy: DropPolicy | str = DropPolicy.DROP_NODE) -> DropDecision:
    """Drop a not-yet-started entry once its deadline has passed.

    The deadline instant itself is still feasible. Cancelling the rest of
    the job under ``drop_job`` is the scheduler's business, not this check's.
    """
    if DropPolicy(drop_policy) is DropPolicy.NEVER:
        return DropDecision.KEEP
    return DropDecision.DROP if now_us > entry.abs_deadline else DropDecision.KEEP


class ReadyQueue:
    """Heap of ready entries with lazy invalidation on removal and re-keying."""

    def __init__(self):
        self._entries: dict[tuple[JobKey, str], ReadyEntry] = {}
        self._heap: list[tuple[tuple, ReadyEntry]] = []

    def __len__(self):
        return len(self._entries)

    def __iter__(self) -> Iterator[ReadyEntry]:
        return iter(sorted(self._entries.values(), key=lambda entry: entry.sort_key))

    def __contains__(self, key: tuple[JobKey, str]) -> bool:
        return key in self._entries

    def entries(self) -> Iterable[ReadyEntry]:
        """Live entries in no particular order."""
        return self._entries.values()

    def push(self, entry: ReadyEntry) -> None:
        self._entries[(entry.job, entry.node)] = entry
        heapq.heappush(self._heap, (entry.sort_key, entry))

    def remove(self, job: JobKey, node: str) -> ReadyEntry | None:
        return self._entries.pop((job, node), None)

    def peek(self) -> ReadyEntry | None:
        while self._heap:
            _, entry = self._heap[0]
            if self._entries.get((entry.job, entry.node)) is entry:
                return entry
            heapq.heappop(self._heap)
        return None

    def pop(self) -> ReadyEntry:
        entry = self.peek()
        if entry is None:
            raise EmptyReadyQueue("no ready entries")
        heapq.heappop(self._heap)
        del self._entries[(entry.job, entry.node)]
        return entry


class SyncEvent(NamedTuple):
    time_us: int
    reason: str
    task: str | None = None
    job: int | None = None
    level: int | None = None


def sync_events(sync: SyncPolicy, trace: Iterable[TraceEvent], now_us: int) -> list[SyncEvent]:
    """Synchronizations a policy requires over the trace up to ``now_us``.

    Periodic ticks fall on every multiple of the interval from a job's
    release through its last completion or drop, both ends included.
    On-demand ones follow level completions and transitions into blocked
    or failed states.
    """
    events = [event for event in trace if event.time_us <= now_us]
    if sync.mode is SyncMode.PERIODIC:
        windows, sizes, resolved = {}, {}, Counter()
        for event in events:
            key = event.job_key
            if event.kind is EventKind.RELEASE:
                windows[key] = [event.time_us, None]
                sizes[key] = len(event.payload.get("heights", {}))
            elif event.kind in (EventKind.COMPLETE, EventKind.DROP) and key in windows:
                resolved[key] += 1
                windows[key][1] = event.time_us
        ticks = set()
        interval = sync.interval_us
        for key, (start, end) in windows.items():
            if resolved[key] < sizes[key] or end is None:
                end = now_us
            tick = -(-start // interval) * interval
            while tick <= end:
                ticks.add(tick)
                tick += interval
        return [SyncEvent(tick, "tick") for tick in sorted(ticks)]

    found = []
    open_levels = {}
    for event in events:
        key = event.job_key
        if event.kind is EventKind.RELEASE:
            open_levels[key] = Counter(event.payload.get("heights", {}).values())
        elif event.kind in (EventKind.COMPLETE, EventKind.DROP) and key in open_levels:
            level = event.payload.get("level")
            if level is None:
                continue
            open_levels[key][level] -= 1
            if open_levels[key][level] == 0 and event.kind is EventKind.COMPLETE:
                found.append(SyncEvent(event.time_us, "level", event.task, event.job, level))
        elif event.kind is EventKind.STATE and event.payload.get("to") in (
                HandlerState.BLOCKED.value, HandlerState.FAILED_OOM.value):
            found.append(SyncEvent(event.time_us, event.payload["to"], event.task, event.job))
    return found


class ActionKind(str, Enum):
    RELEASE_NODE = "release_node"
    REASSIGN = "reassign"
    SYNC = "sync"


class Action(NamedTuple):
    kind: ActionKind
    job: JobKey
    node: str | None = None
    reason: str = ""
    level: int | None = None


@dataclass
class Dispatch:
    leader: ReadyEntry
    riders: tuple[ReadyEntry, ...] = ()
    cost_us: int = 0
    mode: str = "single"

    @property
    def members(self) -> tuple[ReadyEntry, ...]:
        return (self.leader, *self.riders)


@dataclass(frozen=True)
class JobTemplate:
    """Release-independent part of a job: its graph, heights and relative deadlines."""
    graph: DagTask
    refined: RefinedDag | None
    heights: Mapping[str, int]
    deadlines: DeadlineMap
    members: Mapping[str, tuple[str, ...]]
    tracked: Mapping[str, str]
    entries: Mapping[str, str]
    finals: Mapping[str, tuple[str, ...]]
    pending: Mapping[str, int]


@dataclass(eq=False)
class Job:
    key: JobKey
    release_us: int
    deadline_us: int
    graph: DagTask
    heights: dict[str, int]
    deadlines: dict[str, int]
    costs: dict[str, int]
    members: Mapping[str, tuple[str, ...]]
    piece_costs: Mapping[str, int]
    # original node id -> refined node that decides its outcome / that receives its input
    tracked: dict[str, str]
    entries: dict[str, str]
    # refined node -> original nodes whose outcome it decides
    finals: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    pending: dict[str, int] = field(default_factory=dict)
    level_open: Counter = field(default_factory=Counter)
    handlers: dict[str, Handler] = field(default_factory=dict)
    resolved: set[str] = field(default_factory=set)
    completed: set[str] = field(default_factory=set)
    dispatch_deadline: dict[str, int] = field(default_factory=dict)
    started: dict[str, int] = field(default_factory=dict)
    waiting_links: dict[str, set[Link]] = field(default_factory=dict)
    cancelled: bool = False

    @property
    def live(self) -> bool:
        return len(self.resolved) < len(self.graph.nodes)

    def state_of(self, node: str) -> HandlerState:
        handler = self.handlers.get(node)
        return handler.state if handler else HandlerState.CREATED


class Scheduler:
    def __init__(self, config: SchedulerConfig, refine_cfg: RefineConfig | None = None,
                 links: Sequence[Link] = (), trace: EventTrace | None = None):
        self.config = config
        self.refine_cfg = refine_cfg or RefineConfig()
        self.sync = config.effective_sync
        self.trace = trace if trace is not None else EventTrace()
        self.jobs: dict[JobKey, Job] = {}
        self.live: set[JobKey] = set()
        self.ready = ReadyQueue()
        self.links_by_dst: dict[str, list[Link]] = {}
        for link in links:
            self.links_by_dst.setdefault(link.dst_task, []).append(link)
        self.latest_source: dict[tuple[str, str], int] = {}
        self.link_waiters: dict[tuple[str, str], list[tuple[JobKey, str]]] = {}
        self._templates: dict[DagTask, JobTemplate] = {}

    # job set-up

    def _template(self, dag: DagTask) -> JobTemplate:
        template = self._templates.get(dag)
        if template is None:
            template = self._templates[dag] = self._build_template(dag)
        return template

    def _build_template(self, dag: DagTask) -> JobTemplate:
        refined = None
        if self.config.policy.refines:
            refined = refine([(dag, 0)], self.refine_cfg)
            graph = refined.graph
            members = dict(refined.members)
            origins = {node_id: refined.origins(node_id) for node_id in graph.node_ids}
        else:
            graph = dag
            members = {node_id: (node_id,) for node_id in dag.node_ids}
            origins = {node_id: frozenset({node_id}) for node_id in dag.node_ids}

        heights = compute_heights(graph)
        if graph.pinned:
            dm = assign_pinned(graph, heights)
        elif self.config.assignment is Assignment.EQUAL:
            dm = assign_equal(graph, heights, quantum_us=self.config.quantum_us)
        else:
            dm = assign_proportional(graph, heights, weight_mode=self.config.weight_mode,
                                     quantum_us=self.config.quantum_us)

        tracked, entries, finals = {}, {}, {}
        for origin in dag.node_ids:
            holders = [node_id for node_id in graph.node_ids if origin in origins[node_id]]
            tracked[origin] = max(holders, key=lambda n: (heights[n], n))
            entries[origin] = min(holders, key=lambda n: (heights[n], n))
            finals.setdefault(tracked[origin], []).append(origin)
        logger.debug(f"Prepared {dag.task_id}: {len(graph.nodes)} nodes over {len(dm.level_budgets)} levels")
        return JobTemplate(
            graph=graph,
            refined=refined,
            heights=heights,
            deadlines=dm,
            members=members,
            tracked=tracked,
            entries=entries,
            finals={node: tuple(origins_) for node, origins_ in finals.items()},
            pending={node_id: len(graph.predecessors(node_id)) for node_id in graph.node_ids},
        )

    def build_job(self, dag: DagTask, index: int, release_us: int, samples: Mapping[str, int]) -> Job:
        """Refine (when the policy does) and assign deadlines for one job instance.

        The refined graph and relative deadlines depend on the DAG alone and
        are prepared once per DAG value; only costs and absolute deadlines
        are worked out per release.
        """
        template = self._template(dag)
        graph = template.graph
        if template.refined is not None:
            keyed = {(dag.task_id, origin): cost for origin, cost in samples.items()}
            costs = refined_costs(template.refined, keyed, self.refine_cfg)
            pieces = piece_costs(template.refined, keyed, self.refine_cfg)
        else:
            costs = {node_id: max(1, samples[node_id]) for node_id in dag.node_ids}
            pieces = dict(costs)
        dm = absolutize(template.deadlines, template.heights, release_us)

        return Job(
            key=JobKey(dag.task_id, index),
            release_us=release_us,
            deadline_us=release_us + dm.total_us,
            graph=graph,
            heights=dict(template.heights),
            deadlines=dict(dm.absolute),
            costs=costs,
            members=template.members,
            piece_costs=pieces,
            tracked=dict(template.tracked),
            entries=template.entries,
            finals=template.finals,
            pending=dict(template.pending),
            level_open=Counter(template.heights.values()),
        )

    def release_job(self, job: Job, now_us: int) -> list[Action]:
        if job.key in self.jobs:
            raise IllegalState(f"{job.key} released twice")
        self.jobs[job.key] = job
        self.live.add(job.key)
        graph = job.graph
        self.trace.record(
            now_us, EventKind.RELEASE, job.key.task, job.key.index,
            deadline_us=job.deadline_us,
            deadlines=job.deadlines,
            heights=job.heights,
            costs=job.costs,
            edges=sorted(graph.edges),
            sinks=sorted(job.tracked[origin] for origin in job.tracked
                         if not graph.successors(job.tracked[origin])),
            tracked=job.tracked,
            refined=self.config.policy.refines,
        )
        actions = []
        for node_id in graph.node_ids:
            if job.pending[node_id] == 0:
                actions.extend(self._eligible(job, node_id))
        return actions

    # runtime queries

    def job(self, key: JobKey) -> Job:
        try:
            return self.jobs[key]
        except KeyError:
            raise UnknownJob(f"unknown job {key}") from None

    def has_live_jobs(self) -> bool:
        return bool(self.live)

    def live_jobs(self, task_id: str | None = None) -> list[JobKey]:
        return sorted(key for key in self.live if task_id is None or key.task == task_id)

    # state transitions

    def _state(self, job: Job, node: str, target: HandlerState, now_us: int, **extra) -> None:
        handler = job.handlers.setdefault(node, Handler(node))
        previous = handler.transition(target)
        self.trace.record(now_us, EventKind.STATE, job.key.task, job.key.index, node,
                          **{"from": previous.value, "to": target.value}, **extra)

    def make_ready(self, key: JobKey, node: str, now_us: int) -> None:
        job = self.job(key)
        if job.cancelled or node in job.resolved:
            return
        deadline = job.deadlines[node]
        self._state(job, node, HandlerState.READY, now_us, deadline_us=deadline)
        self.ready.push(ReadyEntry(node, key, deadline, job.release_us))

    def wake(self, key: JobKey, node: str, now_us: int) -> None:
        job = self.job(key)
        if job.state_of(node) is not HandlerState.BLOCKED:
            return
        deadline = job.dispatch_deadline.get(node, job.deadlines[node])
        self._state(job, node, HandlerState.READY, now_us, deadline_us=deadline)
        self.ready.push(ReadyEntry(node, key, deadline, job.release_us))

    def on_node_complete(self, key: JobKey, node: str, now_us: int) -> list[Action]:
        """Mark ``node`` completed and work out what that unlocks.

        Returned actions come in application order: a re-assignment first,
        so released successors already carry their new deadlines, then the
        released successors, then any synchronization.
        """
        job = self.job(key)
        if job.state_of(node) is not HandlerState.RUNNING:
            raise IllegalState(f"{key}/{node} completed while {job.state_of(node).value}")
        self._state(job, node, HandlerState.COMPLETED, now_us)
        deadline = job.dispatch_deadline[node]
        late = now_us > deadline
        self.trace.record(now_us, EventKind.COMPLETE, key.task, key.index, node,
                          deadline_us=deadline, late=late, level=job.heights[node])
        if late:
            self.trace.record(now_us, EventKind.MISS, key.task, key.index, node,
                              deadline_us=deadline, lateness_us=now_us - deadline)
        return self._resolve(job, node, now_us, completed=True)

    def block_node(self, key: JobKey, node: str, now_us: int) -> list[Action]:
        job = self.job(key)
        self._state(job, node, HandlerState.BLOCKED, now_us)
        if self.sync.mode is SyncMode.ON_DEMAND:
            return [Action(ActionKind.SYNC, key, node, HandlerState.BLOCKED.value)]
        return []

    def fail_node(self, key: JobKey, node: str, now_us: int) -> list[Action]:
        job = self.job(key)
        self._state(job, node, HandlerState.FAILED_OOM, now_us)
        self.trace.record(now_us, EventKind.DROP, key.task, key.index, node,
                          reason="oom", level=job.heights[node])
        actions = self._resolve(job, node, now_us, completed=False)
        if self.sync.mode is SyncMode.ON_DEMAND:
            actions.append(Action(ActionKind.SYNC, key, node, HandlerState.FAILED_OOM.value))
        if self.config.drop_policy is DropPolicy.DROP_JOB:
            self.cancel_job(key, now_us)
            actions = [a for a in actions if a.kind is ActionKind.SYNC]
        return actions

    def drop_node(self, key: JobKey, node: str, now_us: int, reason: str) -> list[Action]:
        job = self.job(key)
        state = job.state_of(node)
        if state.terminal:
            return []
        if state is HandlerState.READY:
            self.ready.remove(key, node)
            self._state(job, node, HandlerState.DROPPED, now_us)
        elif state is HandlerState.BLOCKED:
            self._state(job, node, HandlerState.READY, now_us)
            self._state(job, node, HandlerState.DROPPED, now_us)
        elif state is HandlerState.RUNNING:
            self._state(job, node, HandlerState.DROPPED, now_us)
        self.trace.record(now_us, EventKind.DROP, key.task, key.index, node,
                          reason=reason, level=job.heights[node],
                          deadline_us=job.dispatch_deadline.get(node, job.deadlines[node]))
        logger.debug(f"Dropped {key}/{node} at {now_us}us ({reason})")
        return self._resolve(job, node, now_us, completed=False)

    def cancel_job(self, key: JobKey, now_us: int, reason: str = "job_cancelled",
                   include_running: bool = False) -> None:
        """Drop every unresolved node of a job; a running node finishes unless asked otherwise."""
        job = self.job(key)
        job.cancelled = True
        for node in job.graph.node_ids:
            if node in job.resolved:
                continue
            if job.state_of(node) is HandlerState.RUNNING and not include_running:
                continue
            self.drop_node(key, node, now_us, reason)

    def shutdown(self, now_us: int) -> None:
        """Horizon reached: everything still unresolved is dropped, flagged as such."""
        for key in self.live_jobs():
            self.cancel_job(key, now_us, reason="horizon", include_running=True)

    def _resolve(self, job: Job, node: str, now_us: int, completed: bool) -> list[Action]:
        job.resolved.add(node)
        if completed:
            job.completed.add(node)
        level = job.heights[node]
        job.level_open[level] -= 1
        if not job.live:
            self.live.discard(job.key)

        actions = []
        if completed:
            for origin in job.finals.get(node, ()):
                actions.extend(self._record_source(job, origin))
        if not job.cancelled:
            for successor in job.graph.successors(node):
                job.pending[successor] -= 1
                if job.pending[successor] == 0:
                    actions.extend(self._eligible(job, successor))
            if completed and job.live and self.config.policy.reassigns:
                actions.insert(0, Action(ActionKind.REASSIGN, job.key, node, "completion"))
        if completed and job.level_open[level] == 0 and self.sync.mode is SyncMode.ON_DEMAND:
            actions.append(Action(ActionKind.SYNC, job.key, node, "level", level))
        return actions

    # cross-task links

    def _link_satisfied(self, link: Link, release_us: int) -> bool:
        latest = self.latest_source.get((link.src_task, link.src_node))
        return latest is not None and latest >= release_us - link.max_staleness_us

    def _eligible(self, job: Job, node: str) -> list[Action]:
        waiting = {
            link for link in self.links_by_dst.get(job.key.task, ())
            if job.entries.get(link.dst_node) == node and not self._link_satisfied(link, job.release_us)
        }
        if not waiting:
            return [Action(ActionKind.RELEASE_NODE, job.key, node)]
        job.waiting_links[node] = waiting
        for link in waiting:
            self.link_waiters.setdefault((link.src_task, link.src_node), []).append((job.key, node))
        return []

    def _record_source(self, job: Job, origin: str) -> list[Action]:
        source = (job.key.task, origin)
        self.latest_source[source] = max(self.latest_source.get(source, job.release_us), job.release_us)
        actions, still_waiting = [], []
        for key, node in self.link_waiters.pop(source, []):
            waiter = self.jobs[key]
            if waiter.cancelled or node in waiter.resolved or node in waiter.handlers:
                continue
            links = {link for link in waiter.waiting_links.get(node, ())
                     if not self._link_satisfied(link, waiter.release_us)}
            waiter.waiting_links[node] = links
            if not any(link.src_task == source[0] and link.src_node == source[1] for link in links):
                if not links:
                    actions.append(Action(ActionKind.RELEASE_NODE, key, node))
                continue
            still_waiting.append((key, node))
        if still_waiting:
            self.link_waiters[source] = still_waiting
        return actions

    # deadlines

    def reassign_job(self, key: JobKey, now_us: int, reason: str) -> dict[str, int]:
        """Redistribute a live job's residual budget over its unfinished nodes.

        Nodes already dispatched keep the deadline they were dispatched
        with. Returns the nodes whose deadline moved.
        """
        job = self.job(key)
        if job.cancelled or not job.live:
            return {}
        remaining = {}
        for node in job.graph.node_ids:
            if node in job.resolved:
                continue
            estimate = job.graph.node(node).cost_us
            if job.state_of(node) is HandlerState.RUNNING:
                estimate = max(1, estimate - (now_us - job.started[node]))
            remaining[node] = estimate
        snap = ProgressSnapshot(now_us, job.release_us, frozenset(job.resolved), remaining)
        try:
            dm = reassign(job.graph, job.heights, snap, job.deadline_us,
                          weight_mode=self.config.weight_mode, quantum_us=self.config.quantum_us)
        except (BudgetExhausted, EmptyDag) as exc:
            logger.debug(f"No reassignment for {key} at {now_us}us: {exc}")
            return {}

        changed = {}
        for node, deadline in dm.absolute.items():
            if node in job.dispatch_deadline or job.deadlines[node] == deadline:
                continue
            job.deadlines[node] = deadline
            changed[node] = deadline
            if (key, node) in self.ready:
                self.ready.push(ReadyEntry(node, key, deadline, job.release_us))
        if changed:
            self.trace.record(now_us, EventKind.REASSIGN, key.task, key.index,
                              reason=reason, deadlines=changed)
        return changed

    def apply_local(self, actions: Iterable[Action], now_us: int) -> list[Action]:
        """Apply the actions the scheduler can carry out itself; return the syncs."""
        deferred = []
        for action in actions:
            if action.kind is ActionKind.RELEASE_NODE:
                self.make_ready(action.job, action.node, now_us)
            elif action.kind is ActionKind.REASSIGN:
                self.reassign_job(action.job, now_us, action.reason)
            else:
                deferred.append(action)
        return deferred

    # dispatch

    def select(self, now_us: int) -> Dispatch | None:
        """Pick the next dispatch, dropping expired entries on the way."""
        while True:
            entry = self.ready.peek()
            if entry is None:
                return None
            if enforce_drop_policy(entry, now_us, self.config.drop_policy) is DropDecision.KEEP:
                break
            actions = self.drop_node(entry.job, entry.node, now_us, "deadline")
            if self.config.drop_policy is DropPolicy.DROP_JOB:
                self.cancel_job(entry.job, now_us)
            else:
                self.apply_local(actions, now_us)

        self.ready.pop()
        job = self.jobs[entry.job]
        spec = job.graph.node(entry.node)
        riders, mode = (), "single"
        if self.config.policy.refines and self.config.merge_across_jobs \
                and spec.kind is NodeKind.SHARED_ENCODER and spec.share_group:
            riders = self._merge_riders(entry, spec.share_group, now_us)
            mode = "merge" if riders else mode
        elif self.config.policy.refines and self.refine_cfg.batch_decoders \
                and spec.kind is NodeKind.DECODER:
            riders = self._batch_riders(entry, spec.share_group, now_us)
            mode = "batch" if riders else mode
        for rider in riders:
            self.ready.remove(rider.job, rider.node)

        costs = [self.jobs[e.job].costs[e.node] for e in (entry, *riders)]
        if mode == "merge":
            cost = max(costs) + self.refine_cfg.merge_surcharge_us * len(riders)
        elif mode == "batch":
            batch = batch_group([e.label for e in (entry, *riders)], self.refine_cfg)
            cost = max(1, batch.cost_us)
        else:
            cost = costs[0]
        return Dispatch(entry, tuple(riders), cost, mode)

    def _candidates(self, entry: ReadyEntry, kind: NodeKind, share_group: str | None, now_us: int):
        matching = []
        for other in self.ready.entries():
            if other.job == entry.job:
                continue
            spec = self.jobs[other.job].graph.node(other.node)
            if spec.kind is not kind or spec.share_group != share_group:
                continue
            if enforce_drop_policy(other, now_us, self.config.drop_policy) is DropDecision.DROP:
                continue
            matching.append(other)
        best = {}
        for other in sorted(matching, key=lambda e: e.sort_key):
            best.setdefault(other.job, other)
        return list(best.values())

    def _merge_riders(self, entry: ReadyEntry, share_group: str, now_us: int) -> tuple[ReadyEntry, ...]:
        candidates = self._candidates(entry, NodeKind.SHARED_ENCODER, share_group, now_us)
        if not candidates:
            return ()
        by_label = {e.label: e for e in (entry, *candidates)}
        merge_input = [
            MergeCandidate(label, e.release, replace(self.jobs[e.job].graph.node(e.node),
                                                     cost_us=self.jobs[e.job].costs[e.node]))
            for label, e in by_label.items()
        ]
        for group in dynamic_merge(merge_input, self.refine_cfg):
            if entry.label in group.members:
                return tuple(by_label[m] for m in group.members if m != entry.label)
        return ()

    def _batch_riders(self, entry: ReadyEntry, share_group: str | None, now_us: int) -> tuple[ReadyEntry, ...]:
        return tuple(self._candidates(entry, NodeKind.DECODER, share_group, now_us))

    def start(self, dispatch: Dispatch, now_us: int, start_us: int) -> None:
        leader = dispatch.leader
        labels = [e.label for e in dispatch.members]
        member_costs = [self.jobs[e.job].costs[e.node] for e in dispatch.members]
        for entry in dispatch.members:
            job = self.jobs[entry.job]
            self._state(job, entry.node, HandlerState.RUNNING, now_us)
            job.dispatch_deadline[entry.node] = entry.abs_deadline
            job.started[entry.node] = start_us
            payload = {
                "role": "leader" if entry is leader else "rider",
                "group": leader.label,
                "start_us": start_us,
                "deadline_us": entry.abs_deadline,
                "release_us": entry.release,
                "cost_us": dispatch.cost_us if entry is leader else 0,
                "node_cost_us": job.costs[entry.node],
            }
            if entry is leader:
                payload.update(mode=dispatch.mode, members=labels, member_costs=member_costs)
                if dispatch.mode == "merge":
                    payload.update(surcharge_us=self.refine_cfg.merge_surcharge_us)
            pieces = job.members.get(entry.node, ())
            if len(pieces) > 1:
                payload.update(pieces=list(pieces), piece_costs=[job.piece_costs[p] for p in pieces],
                               surcharge_us=self.refine_cfg.merge_surcharge_us)
            self.trace.record(now_us, EventKind.DISPATCH, entry.job.task, entry.job.index,
                              entry.node, **payload)


def orchestrate(scenario, config: SchedulerConfig) -> EventTrace:
    """Run the full release / refine / dispatch / reassign / sync loop over a scenario."""
    from .simulator import run

    return run(scenario, config)
