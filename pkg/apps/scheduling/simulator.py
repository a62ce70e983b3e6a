"""Discrete-event engine driving the scheduler in virtual time.

Events sit in a heap ordered by (time, kind priority, sequence number).
Every event of an instant is handled before the accelerator is offered a
new dispatch, so same-instant completions and releases all compete in the
same EDF decision.
"""
from __future__ import annotations

import heapq
import itertools
import logging
from enum import IntEnum

from apps.dags.exceptions import InvalidMutation, ScenarioInvalid
from apps.dags.graph import apply_mutation

from .scheduler import Action, ActionKind, Dispatch, JobKey, Scheduler, SchedulerConfig, SyncMode
from .trace import EventKind, EventTrace
from .workload import FaultKind, Scenario, sample_cost, validate_scenario

logger = logging.getLogger('scheduling')


class _Event(IntEnum):
    # a tick sees the jobs released at its instant and those finishing at it
    MUTATION = 0
    RELEASE = 1
    TICK = 2
    COMPLETE = 3
    WAKE = 4
    ACCEL_FREE = 5
    HORIZON = 6


class Simulator:
    def __init__(self, scenario: Scenario, config: SchedulerConfig):
        report = validate_scenario(scenario)
        if not report.ok:
            raise ScenarioInvalid(report.violations)
        self.scenario = scenario
        self.config = config
        self.sync = config.effective_sync
        self.trace = EventTrace()
        self.scheduler = Scheduler(config, scenario.refine, scenario.links, self.trace)
        self.now = 0
        self.current = scenario.task_map
        self.faults = {(f.task, f.job, f.node): f for f in scenario.faults}
        self._queue = []
        self._seq = itertools.count()
        self._tokens = itertools.count()
        self._busy_until = 0
        self._running: Dispatch | None = None
        self._running_token = None
        self._next_tick = None
        self._finished = False

    def _push(self, time_us: int, kind: _Event, data=None) -> None:
        heapq.heappush(self._queue, (time_us, kind, next(self._seq), data))

    def run(self) -> EventTrace:
        scenario = self.scenario
        if not scenario.tasks:
            return self.trace
        logger.info(
            f"Simulating {scenario.name} under {self.config.policy.value} "
            f"(sync {self.sync}, horizon {scenario.horizon_us}us, seed {scenario.seed})"
        )
        for task in scenario.tasks:
            if task.offset_us < scenario.horizon_us:
                self._push(task.offset_us, _Event.RELEASE, (task.task_id, 0))
        for mutation in scenario.ordered_mutations():
            self._push(mutation.effective_us, _Event.MUTATION, mutation)
        self._push(scenario.horizon_us, _Event.HORIZON)

        while self._queue and not self._finished:
            self.now = self._queue[0][0]
            while self._queue and self._queue[0][0] == self.now and not self._finished:
                _, kind, _, data = heapq.heappop(self._queue)
                self._handle(kind, data)
            if not self._finished:
                self._dispatch()

        logger.info(f"Finished {scenario.name} under {self.config.policy.value}: {len(self.trace)} events")
        return self.trace

    def _handle(self, kind: _Event, data) -> None:
        if kind is _Event.TICK:
            self._on_tick()
        elif kind is _Event.COMPLETE:
            self._on_complete(data)
        elif kind is _Event.MUTATION:
            self._on_mutation(data)
        elif kind is _Event.RELEASE:
            self._on_release(*data)
        elif kind is _Event.WAKE:
            self.scheduler.wake(*data, self.now)
        elif kind is _Event.HORIZON:
            self.scheduler.shutdown(self.now)
            self._finished = True
        # ACCEL_FREE only wakes the loop up so the dispatcher gets a turn

    def _on_release(self, task_id: str, index: int) -> None:
        dag = self.current[task_id]
        scenario = self.scenario
        samples = {
            node.id: sample_cost(scenario.exec_model.for_node(task_id, node), scenario.seed,
                                 task_id, index, node.id, scenario.interference)
            for node in dag.nodes
        }
        job = self.scheduler.build_job(dag, index, self.now, samples)
        self._apply(self.scheduler.release_job(job, self.now))

        template = scenario.task_map[task_id]
        if template.period_us and (template.max_jobs is None or index + 1 < template.max_jobs):
            next_release = template.offset_us + (index + 1) * template.period_us
            if next_release < scenario.horizon_us:
                self._push(next_release, _Event.RELEASE, (task_id, index + 1))
        self._arm_tick(inclusive=True)

    def _on_mutation(self, mutation) -> None:
        try:
            self.current[mutation.task_id] = apply_mutation(self.current[mutation.task_id], mutation)
        except InvalidMutation as exc:
            raise ScenarioInvalid([str(exc)]) from exc
        self.trace.record(self.now, EventKind.MUTATION, mutation.task_id,
                          mutation=mutation.describe(), change=mutation.kind.value)
        logger.debug(f"{mutation.task_id}: {mutation.describe()} at {self.now}us")
        if self.config.policy.reassigns:
            for key in self.scheduler.live_jobs(mutation.task_id):
                self.scheduler.reassign_job(key, self.now, "mutation")

    def _on_tick(self) -> None:
        self._next_tick = None
        if not self.scheduler.has_live_jobs():
            return
        self._sync(reason="tick")
        self._arm_tick()

    def _arm_tick(self, inclusive: bool = False) -> None:
        if self.sync.mode is not SyncMode.PERIODIC or self._next_tick is not None:
            return
        interval = self.sync.interval_us
        if inclusive:
            self._next_tick = -(-self.now // interval) * interval
        else:
            self._next_tick = (self.now // interval + 1) * interval
        self._push(self._next_tick, _Event.TICK)

    def _on_complete(self, token) -> None:
        if token != self._running_token:
            return
        dispatch, self._running, self._running_token = self._running, None, None
        actions = []
        for entry in dispatch.members:
            fault = self._fault_for(entry.job, entry.node)
            if fault is not None and fault.kind is FaultKind.OOM:
                actions.extend(self.scheduler.fail_node(entry.job, entry.node, self.now))
            elif fault is not None and fault.kind is FaultKind.BLOCK:
                actions.extend(self.scheduler.block_node(entry.job, entry.node, self.now))
                self._push(self.now + fault.block_us, _Event.WAKE, (entry.job, entry.node))
            else:
                actions.extend(self.scheduler.on_node_complete(entry.job, entry.node, self.now))
        self._apply(actions)

    def _fault_for(self, key: JobKey, node: str):
        """A fault fires once, on the piece that decides its original node's outcome."""
        job = self.scheduler.job(key)
        for origin in job.finals.get(node, ()):
            fault = self.faults.pop((key.task, key.index, origin), None)
            if fault is not None:
                logger.debug(f"Injecting {fault.kind.value} into {key}/{node} at {self.now}us")
                return fault
        return None

    def _apply(self, actions: list[Action]) -> None:
        for action in self.scheduler.apply_local(actions, self.now):
            if action.kind is ActionKind.SYNC:
                self._sync(action.reason, action.job, action.node, action.level)

    def _sync(self, reason: str, key: JobKey | None = None, node: str | None = None,
              level: int | None = None) -> None:
        cost = self.config.sync_cost_us
        self.trace.record(self.now, EventKind.SYNC, key.task if key else None,
                          key.index if key else None, node,
                          reason=reason, level=level, cost_us=cost)
        self._busy_until = max(self._busy_until, self.now) + cost
        if self._running is not None:
            # the running group is stalled for the length of the sync
            self._running_token = next(self._tokens)
            self._push(self._busy_until, _Event.COMPLETE, self._running_token)
        elif cost:
            self._push(self._busy_until, _Event.ACCEL_FREE)

    def _dispatch(self) -> None:
        if self._running is not None or self._busy_until > self.now:
            return
        dispatch = self.scheduler.select(self.now)
        if dispatch is None:
            return
        start = self.now + self.config.dispatch_overhead_us
        self.scheduler.start(dispatch, self.now, start)
        self._running = dispatch
        self._busy_until = start + dispatch.cost_us
        self._running_token = next(self._tokens)
        self._push(self._busy_until, _Event.COMPLETE, self._running_token)


def run(scenario: Scenario, config: SchedulerConfig) -> EventTrace:
    return Simulator(scenario, config).run()
