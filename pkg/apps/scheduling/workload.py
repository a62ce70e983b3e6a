"""Scenario description: tasks, mutations, execution-time model and faults."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Union

import numpy as np

from apps.dags.exceptions import InvalidMutation
from apps.dags.graph import (
    DagMutation, DagTask, NodeSpec, ValidationReport, Violation, apply_mutation, validate_dag,
)
from apps.dags.refinement import RefineConfig


@dataclass(frozen=True)
class Constant:
    cost_us: int

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.cost_us)

    def problems(self) -> list[str]:
        return [] if self.cost_us > 0 else ["constant cost must be > 0"]


@dataclass(frozen=True)
class Uniform:
    lo_us: int
    hi_us: int

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.lo_us, self.hi_us))

    def problems(self) -> list[str]:
        if self.lo_us <= 0:
            return ["uniform lower bound must be > 0"]
        if self.lo_us > self.hi_us:
            return ["uniform bounds are not ordered"]
        return []


@dataclass(frozen=True)
class TruncNormal:
    mean_us: int
    sd_us: int
    lo_us: int
    hi_us: int

    def sample(self, rng: np.random.Generator) -> float:
        # rejection first; a pathological parameter set falls back to clipping
        for _ in range(64):
            value = rng.normal(self.mean_us, self.sd_us)
            if self.lo_us <= value <= self.hi_us:
                return float(value)
        return float(np.clip(self.mean_us, self.lo_us, self.hi_us))

    def problems(self) -> list[str]:
        problems = []
        if self.lo_us <= 0:
            problems.append("truncated normal lower bound must be > 0")
        if self.lo_us > self.hi_us:
            problems.append("truncated normal bounds are not ordered")
        if self.sd_us < 0:
            problems.append("truncated normal sd must be >= 0")
        return problems


Distribution = Union[Constant, Uniform, TruncNormal]


@dataclass(frozen=True)
class ExecutionModel:
    """Per-node execution time distributions keyed by (task_id, node_id).

    Nodes without an entry run for exactly their declared cost.
    """

    distributions: Mapping[tuple[str, str], Distribution] = field(default_factory=dict)

    def for_node(self, task_id: str, node: NodeSpec) -> Distribution:
        return self.distributions.get((task_id, node.id)) or Constant(node.cost_us)


def sample_cost(dist: Distribution, seed: int, task_id: str, job: int, node_id: str,
                interference: float = 1.0) -> int:
    """Execution time of one node instance.

    Every instance draws from its own stream derived from the scenario seed
    and the instance identity, so a sample never depends on event order.
    """
    if isinstance(dist, Constant):
        return max(1, int(round(dist.cost_us * interference)))
    stream = zlib.crc32(f"{task_id}:{job}:{node_id}".encode())
    rng = np.random.default_rng([seed, stream])
    return max(1, int(round(dist.sample(rng) * interference)))


@dataclass(frozen=True)
class Link:
    """Cross-task data dependency between asynchronous tasks.

    A job of ``dst_task`` may start ``dst_node`` only once a job of
    ``src_task`` released no earlier than ``max_staleness_us`` before it has
    completed ``src_node``.
    """

    src_task: str
    src_node: str
    dst_task: str
    dst_node: str
    max_staleness_us: int = 0


class FaultKind(str, Enum):
    OOM = "oom"
    BLOCK = "block"


@dataclass(frozen=True)
class Fault:
    task: str
    node: str
    job: int
    kind: FaultKind = FaultKind.OOM
    block_us: int = 0


@dataclass(frozen=True)
class Scenario:
    name: str
    tasks: tuple[DagTask, ...] = ()
    mutations: tuple[DagMutation, ...] = ()
    exec_model: ExecutionModel = field(default_factory=ExecutionModel)
    horizon_us: int = 1_000_000
    seed: int = 0
    interference: float = 1.0
    links: tuple[Link, ...] = ()
    faults: tuple[Fault, ...] = ()
    refine: RefineConfig = field(default_factory=RefineConfig)
    description: str = ""

    @property
    def task_map(self) -> dict[str, DagTask]:
        return {task.task_id: task for task in self.tasks}

    def ordered_mutations(self) -> list[DagMutation]:
        indexed = sorted(enumerate(self.mutations), key=lambda item: (item[1].effective_us, item[0]))
        return [mutation for _, mutation in indexed]


def validate_scenario(scenario: Scenario) -> ValidationReport:
    """Every DAG check plus the scenario-level ones; returns violations as data."""
    violations = []

    def add(code, subject, message):
        violations.append(Violation(code, subject, message))

    if scenario.horizon_us <= 0:
        add("non-positive horizon", scenario.name, "horizon must be > 0")
    if scenario.seed < 0:
        add("negative seed", scenario.name, "seed must be >= 0")
    if scenario.interference < 1.0:
        add("interference below one", scenario.name, f"interference {scenario.interference} must be >= 1.0")

    tasks = {}
    for task in scenario.tasks:
        if task.task_id in tasks:
            add("duplicate task", task.task_id, "task id used twice")
            continue
        tasks[task.task_id] = task
        if not task.nodes:
            add("empty task", task.task_id, "task has no nodes")
        for violation in validate_dag(task).violations:
            violations.append(violation._replace(subject=f"{task.task_id}/{violation.subject}"))

    # every node a task ever has, so links and faults may target added nodes
    known_nodes = {task_id: set(task.node_ids) for task_id, task in tasks.items()}
    current = dict(tasks)
    for mutation in scenario.ordered_mutations():
        subject = f"mutation@{mutation.effective_us}us"
        if mutation.effective_us < 0 or mutation.effective_us >= scenario.horizon_us:
            add("mutation outside horizon", subject, "mutation time must lie in [0, horizon)")
        if mutation.task_id not in current:
            add("unknown task", subject, f"no task {mutation.task_id!r}")
            continue
        try:
            current[mutation.task_id] = apply_mutation(current[mutation.task_id], mutation)
        except InvalidMutation as exc:
            add("invalid mutation", subject, str(exc))
            continue
        known_nodes[mutation.task_id].update(current[mutation.task_id].node_ids)

    for (task_id, node_id), dist in scenario.exec_model.distributions.items():
        subject = f"{task_id}/{node_id}"
        if node_id not in known_nodes.get(task_id, ()):
            add("unknown node", subject, "execution model names a node no task has")
        for problem in dist.problems():
            add("bad distribution", subject, problem)

    for link in scenario.links:
        subject = f"{link.src_task}/{link.src_node}->{link.dst_task}/{link.dst_node}"
        if link.src_task == link.dst_task:
            add("self link", subject, "a link must join two different tasks")
        for task_id, node_id in ((link.src_task, link.src_node), (link.dst_task, link.dst_node)):
            if node_id not in known_nodes.get(task_id, ()):
                add("unknown link endpoint", subject, f"{task_id}/{node_id} does not exist")
        if link.max_staleness_us < 0:
            add("negative staleness", subject, "max staleness must be >= 0")

    for fault in scenario.faults:
        subject = f"{fault.task}/{fault.node}#{fault.job}"
        if fault.node not in known_nodes.get(fault.task, ()):
            add("unknown fault target", subject, "fault names a node no task has")
        if fault.job < 0:
            add("negative job index", subject, "job index must be >= 0")
        if fault.kind is FaultKind.BLOCK and fault.block_us <= 0:
            add("non-positive block time", subject, "a block fault needs a duration > 0")

    return ValidationReport(tuple(violations))
