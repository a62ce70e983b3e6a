"""Intermediate deadline assignment.

Every height level of a DAG receives one relative budget and the budgets
add up to the end-to-end deadline exactly. Budgets are handed out in whole
quanta (1 ms by default); whatever does not fill a quantum goes to the
deepest level.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from typing import Mapping, Sequence

from .exceptions import BudgetExhausted, EmptyDag
from .graph import DagTask, HeightMap, levels_of

DEFAULT_QUANTUM_US = 1_000


class WeightMode(str, Enum):
    MAX = "max"
    SUM = "sum"


@dataclass(frozen=True)
class DeadlineMap:
    relative: Mapping[str, int]
    level_budgets: Mapping[int, int]
    absolute: Mapping[str, int] | None = None

    @property
    def total_us(self) -> int:
        return sum(self.level_budgets.values())


@dataclass(frozen=True)
class ProgressSnapshot:
    now_us: int
    job_release_us: int
    completed: frozenset[str] = frozenset()
    remaining_cost: Mapping[str, int] | None = None

    def __post_init__(self):
        if self.now_us < self.job_release_us:
            raise ValueError("snapshot taken before the job was released")
        overlap = set(self.completed) & set(self.remaining_cost or {})
        if overlap:
            raise ValueError(f"nodes both completed and pending: {sorted(overlap)}")


def level_weight(costs: Sequence[int], mode: WeightMode | str = WeightMode.MAX) -> int:
    return sum(costs) if WeightMode(mode) is WeightMode.SUM else max(costs)


def apportion(total_us: int, weights: Sequence[int], quantum_us: int = DEFAULT_QUANTUM_US) -> list[int]:
    """Split ``total_us`` over levels in proportion to ``weights``.

    Each level is guaranteed one quantum; the remaining quanta follow the
    highest-averages rule, which keeps every share non-decreasing when the
    total grows. Ties go to the deeper level.
    """
    if not weights:
        raise EmptyDag("nothing to apportion")
    count = len(weights)
    quantum = quantum_us if total_us // quantum_us >= count else 1
    if total_us < count:
        raise ValueError(f"{total_us}us cannot give {count} levels a positive budget")
    units, leftover = divmod(total_us, quantum)

    free = units - count
    weight_sum = sum(weights)
    seats = [free * w // weight_sum for w in weights]
    heap = [(-Fraction(w, s + 1), -i) for i, (w, s) in enumerate(zip(weights, seats))]
    heapq.heapify(heap)
    for _ in range(free - sum(seats)):
        _, neg_index = heapq.heappop(heap)
        index = -neg_index
        seats[index] += 1
        heapq.heappush(heap, (-Fraction(weights[index], seats[index] + 1), neg_index))

    budgets = [(seat + 1) * quantum for seat in seats]
    budgets[-1] += leftover
    return budgets


def _split_equal(total_us: int, count: int, quantum_us: int) -> list[int]:
    quantum = quantum_us if total_us // quantum_us >= count else 1
    if total_us < count:
        raise ValueError(f"{total_us}us cannot give {count} levels a positive budget")
    units, leftover = divmod(total_us, quantum)
    share, remainder = divmod(units, count)
    budgets = [share * quantum] * count
    budgets[-1] += remainder * quantum + leftover
    return budgets


def _build(heights: HeightMap, levels: Sequence[int], budgets: Sequence[int],
           nodes: Sequence[str]) -> DeadlineMap:
    level_budgets = dict(zip(levels, budgets))
    relative = {node_id: level_budgets[heights[node_id]] for node_id in sorted(nodes)}
    return DeadlineMap(relative, level_budgets)


def assign_proportional(dag: DagTask, heights: HeightMap, *,
                        weight_mode: WeightMode | str = WeightMode.MAX,
                        quantum_us: int = DEFAULT_QUANTUM_US) -> DeadlineMap:
    if not dag.nodes:
        raise EmptyDag(f"{dag.task_id} has no nodes")
    levels = levels_of(heights)
    weights = [
        level_weight([dag.node(node_id).cost_us for node_id in members], weight_mode)
        for members in levels.values()
    ]
    budgets = apportion(dag.deadline_us, weights, quantum_us)
    return _build(heights, list(levels), budgets, dag.node_ids)


def assign_equal(dag: DagTask, heights: HeightMap, *,
                 quantum_us: int = DEFAULT_QUANTUM_US) -> DeadlineMap:
    if not dag.nodes:
        raise EmptyDag(f"{dag.task_id} has no nodes")
    levels = levels_of(heights)
    budgets = _split_equal(dag.deadline_us, len(levels), quantum_us)
    return _build(heights, list(levels), budgets, dag.node_ids)


def assign_pinned(dag: DagTask, heights: HeightMap) -> DeadlineMap:
    """Use the deadlines pinned on the nodes; a level's budget is its largest pin."""
    if not dag.nodes:
        raise EmptyDag(f"{dag.task_id} has no nodes")
    if not dag.pinned:
        raise ValueError(f"{dag.task_id} does not pin a deadline on every node")
    level_budgets = {}
    for node in dag.nodes:
        level = heights[node.id]
        level_budgets[level] = max(level_budgets.get(level, 0), node.deadline_us)
    level_budgets = dict(sorted(level_budgets.items()))
    relative = {node.id: level_budgets[heights[node.id]] for node in dag.nodes}
    return DeadlineMap(relative, level_budgets)


def absolutize(dm: DeadlineMap, heights: HeightMap, release_us: int) -> DeadlineMap:
    cumulative = {}
    elapsed = release_us
    for level in sorted(dm.level_budgets):
        elapsed += dm.level_budgets[level]
        cumulative[level] = elapsed
    absolute = {node_id: cumulative[heights[node_id]] for node_id in dm.relative}
    return replace(dm, absolute=absolute)


def reassign(dag: DagTask, heights: HeightMap, snap: ProgressSnapshot, deadline_abs: int, *,
             weight_mode: WeightMode | str = WeightMode.MAX,
             quantum_us: int = DEFAULT_QUANTUM_US) -> DeadlineMap:
    """Redistribute the residual budget over the levels that still have work."""
    if deadline_abs <= snap.now_us:
        raise BudgetExhausted(snap.now_us, deadline_abs)
    remaining = snap.remaining_cost or {}
    by_level = {}
    for node_id in dag.node_ids:
        if node_id in snap.completed:
            continue
        cost = remaining.get(node_id, dag.node(node_id).cost_us)
        by_level.setdefault(heights[node_id], []).append((node_id, cost))
    if not by_level:
        raise EmptyDag(f"{dag.task_id} has no unfinished nodes")

    levels = sorted(by_level)
    weights = [level_weight([cost for _, cost in by_level[level]], weight_mode) for level in levels]
    try:
        budgets = apportion(deadline_abs - snap.now_us, weights, quantum_us)
    except ValueError:
        raise BudgetExhausted(snap.now_us, deadline_abs) from None
    unfinished = [node_id for level in levels for node_id, _ in by_level[level]]
    return absolutize(_build(heights, levels, budgets, unfinished), heights, snap.now_us)
