"""DAG task model: nodes, precedence edges and structural queries.

Durations are integer microseconds. Node ids are strings and every
ordering decision falls back to ascending node id, so the same DAG always
yields the same topological order, heights and traces.
"""
from __future__ import annotations

import itertools
import logging
import random
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from typing import Iterator, Mapping, NamedTuple

import networkx as nx

from .exceptions import CycleDetected, InvalidMutation

logger = logging.getLogger('scheduling')

US_PER_MS = 1000

HeightMap = Mapping[str, int]


def ms_to_us(value) -> int:
    return int(round(float(value) * US_PER_MS))


def us_to_ms(value: int) -> float:
    return value / US_PER_MS


class NodeKind(str, Enum):
    MONOLITHIC = "monolithic"
    SHARED_ENCODER = "shared_encoder"
    DECODER = "decoder"


@dataclass(frozen=True)
class NodeSpec:
    id: str
    cost_us: int
    kind: NodeKind = NodeKind.MONOLITHIC
    share_group: str | None = None
    decoder_of: str | None = None
    # Explicit relative deadline for the node's level, overriding assignment.
    deadline_us: int | None = None

    @property
    def splittable(self) -> bool:
        """A monolithic node annotated with a share group runs a weight-shared network."""
        return self.kind is NodeKind.MONOLITHIC and self.share_group is not None


@dataclass(frozen=True)
class DagTask:
    task_id: str
    nodes: tuple[NodeSpec, ...]
    edges: frozenset[tuple[str, str]] = frozenset()
    deadline_us: int = 0
    period_us: int | None = None
    offset_us: int = 0
    max_jobs: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=lambda n: n.id)))
        object.__setattr__(self, "edges", frozenset(tuple(edge) for edge in self.edges))

    @cached_property
    def node_map(self) -> dict[str, NodeSpec]:
        return {node.id: node for node in self.nodes}

    @property
    def node_ids(self) -> list[str]:
        return [node.id for node in self.nodes]

    def node(self, node_id: str) -> NodeSpec:
        return self.node_map[node_id]

    @cached_property
    def _adjacency(self) -> tuple[dict[str, tuple[str, ...]], dict[str, tuple[str, ...]]]:
        preds = {node_id: [] for node_id in self.node_map}
        succs = {node_id: [] for node_id in self.node_map}
        for u, v in sorted(self.edges):
            if u in succs and v in preds:
                succs[u].append(v)
                preds[v].append(u)
        return (
            {k: tuple(v) for k, v in preds.items()},
            {k: tuple(v) for k, v in succs.items()},
        )

    def predecessors(self, node_id: str) -> tuple[str, ...]:
        return self._adjacency[0][node_id]

    def successors(self, node_id: str) -> tuple[str, ...]:
        return self._adjacency[1][node_id]

    @property
    def sinks(self) -> list[str]:
        return [node_id for node_id in self.node_map if not self.successors(node_id)]

    @property
    def pinned(self) -> bool:
        return bool(self.nodes) and all(node.deadline_us is not None for node in self.nodes)

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(self.node_ids)
        graph.add_edges_from(sorted(self.edges))
        return graph


class Violation(NamedTuple):
    code: str
    subject: str
    message: str

    def __str__(self):
        return f"{self.subject}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def codes(self) -> list[str]:
        return [violation.code for violation in self.violations]


def validate_dag(dag: DagTask) -> ValidationReport:
    """Check every DagTask invariant and return the violations as data."""
    violations = []
    subject = dag.task_id
    seen = set()
    kinds = {}
    for node in dag.nodes:
        if node.id in seen:
            violations.append(Violation("duplicate node", node.id, f"node id {node.id!r} is not unique"))
        seen.add(node.id)
        kinds[node.id] = node.kind

    for node in dag.nodes:
        if node.cost_us <= 0:
            violations.append(Violation("non-positive cost", node.id, f"cost of {node.id} must be > 0"))
        if node.kind is NodeKind.DECODER:
            if not node.decoder_of:
                violations.append(Violation(
                    "missing decoder reference", node.id, f"decoder {node.id} names no encoder"))
            elif node.decoder_of not in kinds:
                violations.append(Violation(
                    "dangling decoder reference", node.id,
                    f"dangling decoder reference: {node.id} -> {node.decoder_of}"))
            elif kinds[node.decoder_of] is not NodeKind.SHARED_ENCODER:
                violations.append(Violation(
                    "decoder reference kind", node.id,
                    f"{node.id} decodes {node.decoder_of}, which is not a shared encoder"))
        if node.kind is NodeKind.SHARED_ENCODER and not node.share_group:
            violations.append(Violation(
                "missing share group", node.id, f"shared encoder {node.id} has no share group"))
        if node.deadline_us is not None and node.deadline_us <= 0:
            violations.append(Violation(
                "non-positive pinned deadline", node.id, f"pinned deadline of {node.id} must be > 0"))

    known_edges = []
    for u, v in sorted(dag.edges):
        if u not in kinds or v not in kinds:
            missing = u if u not in kinds else v
            violations.append(Violation(
                "missing edge endpoint", f"{u}->{v}", f"edge {u}->{v} references unknown node {missing}"))
        else:
            known_edges.append((u, v))

    if dag.deadline_us <= 0:
        violations.append(Violation("non-positive deadline", subject, "end-to-end deadline must be > 0"))
    if dag.period_us is not None and dag.period_us <= 0:
        violations.append(Violation("non-positive period", subject, "period must be > 0"))
    if dag.offset_us < 0:
        violations.append(Violation("negative offset", subject, "release offset must be >= 0"))
    if dag.max_jobs is not None and dag.max_jobs < 1:
        violations.append(Violation("non-positive job count", subject, "max_jobs must be >= 1"))

    graph = nx.DiGraph()
    graph.add_nodes_from(sorted(kinds))
    graph.add_edges_from(known_edges)
    cycle = _find_cycle(graph)
    if cycle:
        violations.append(Violation("cycle", "->".join(cycle), f"cycle through {' -> '.join(cycle)}"))
    elif dag.deadline_us > 0:
        depth = _split_depth(graph, {node.id for node in dag.nodes if node.splittable and node.cost_us >= 2})
        if dag.deadline_us < depth:
            violations.append(Violation(
                "deadline below level count", subject,
                f"{dag.deadline_us}us cannot give {depth} levels a budget of at least 1us each"))

    pinned = [node for node in dag.nodes if node.deadline_us is not None]
    if pinned and len(pinned) != len(dag.nodes):
        violations.append(Violation(
            "partial pinned deadlines", subject, "pinned deadlines must cover every node or none"))
    elif pinned and not cycle and not any(v.code == "missing edge endpoint" for v in violations):
        total = sum(_pinned_levels(dag).values())
        if total > dag.deadline_us:
            violations.append(Violation(
                "pinned deadlines exceed deadline", subject,
                f"pinned level budgets sum to {total}us, above the {dag.deadline_us}us deadline"))

    return ValidationReport(tuple(violations))


def _find_cycle(graph: nx.DiGraph) -> list[str]:
    try:
        edges = nx.find_cycle(graph)
    except nx.NetworkXNoCycle:
        return []
    return [u for u, _ in edges] + [edges[0][0]]


def _split_depth(graph: nx.DiGraph, splittable: set[str]) -> int:
    """Levels on the longest path once every splittable node becomes an encoder and a decoder."""
    depth = {}
    for node_id in nx.topological_sort(graph):
        own = 2 if node_id in splittable else 1
        depth[node_id] = own + max((depth[u] for u in graph.predecessors(node_id)), default=0)
    return max(depth.values(), default=0)


def _pinned_levels(dag: DagTask) -> dict[int, int]:
    heights = compute_heights(dag)
    levels = {}
    for node in dag.nodes:
        level = heights[node.id]
        levels[level] = max(levels.get(level, 0), node.deadline_us)
    return levels


def topological_sort(dag: DagTask) -> list[str]:
    """Order nodes so every edge points forward; ties go to the smaller node id."""
    graph = dag.to_networkx()
    try:
        return list(nx.lexicographical_topological_sort(graph))
    except nx.NetworkXUnfeasible:
        raise CycleDetected(_find_cycle(graph)) from None


def compute_heights(dag: DagTask) -> dict[str, int]:
    heights = {}
    for node_id in topological_sort(dag):
        preds = dag.predecessors(node_id)
        heights[node_id] = 1 + max(heights[p] for p in preds) if preds else 0
    return heights


def levels_of(heights: HeightMap) -> dict[int, list[str]]:
    """Group node ids by height, each level sorted by id."""
    levels = {}
    for node_id in sorted(heights):
        levels.setdefault(heights[node_id], []).append(node_id)
    return dict(sorted(levels.items()))


def indegree_zero_set(dag: DagTask) -> frozenset[str]:
    return frozenset(node_id for node_id in dag.node_map if not dag.predecessors(node_id))


class MutationKind(str, Enum):
    ADD_NODE = "add_node"
    REMOVE_NODE = "remove_node"
    ADD_EDGE = "add_edge"
    REMOVE_EDGE = "remove_edge"


@dataclass(frozen=True)
class DagMutation:
    kind: MutationKind
    task_id: str
    effective_us: int = 0
    node: NodeSpec | None = None
    node_id: str | None = None
    edge: tuple[str, str] | None = None

    @property
    def target(self) -> str | None:
        if self.node_id is not None:
            return self.node_id
        return self.node.id if self.node is not None else None

    def describe(self) -> str:
        if self.kind in (MutationKind.ADD_EDGE, MutationKind.REMOVE_EDGE):
            return f"{self.kind.value} {self.edge[0]}->{self.edge[1]}" if self.edge else self.kind.value
        return f"{self.kind.value} {self.target}"


def apply_mutation(dag: DagTask, m: DagMutation) -> DagTask:
    """Return a new DagTask with ``m`` applied; ``dag`` itself is left untouched."""
    if m.task_id != dag.task_id:
        raise InvalidMutation(f"mutation targets task {m.task_id!r}, not {dag.task_id!r}")

    nodes = dag.node_map
    edges = set(dag.edges)
    if m.kind is MutationKind.ADD_NODE:
        if m.node is None:
            raise InvalidMutation("add_node needs a node")
        if m.node.id in nodes:
            raise InvalidMutation(f"node {m.node.id!r} already exists in {dag.task_id}")
        new_nodes = dag.nodes + (m.node,)
    elif m.kind is MutationKind.REMOVE_NODE:
        target = m.target
        if target not in nodes:
            raise InvalidMutation(f"node {target!r} does not exist in {dag.task_id}")
        new_nodes = tuple(node for node in dag.nodes if node.id != target)
        edges = {(u, v) for u, v in edges if target not in (u, v)}
    elif m.kind is MutationKind.ADD_EDGE:
        if m.edge is None:
            raise InvalidMutation("add_edge needs an edge")
        edge = tuple(m.edge)
        if edge in edges:
            raise InvalidMutation(f"edge {edge[0]}->{edge[1]} already present")
        if edge[0] not in nodes or edge[1] not in nodes:
            raise InvalidMutation(f"edge {edge[0]}->{edge[1]} references an unknown node")
        new_nodes = dag.nodes
        edges.add(edge)
    elif m.kind is MutationKind.REMOVE_EDGE:
        edge = tuple(m.edge) if m.edge is not None else None
        if edge not in edges:
            raise InvalidMutation(f"edge {m.edge} is not present")
        new_nodes = dag.nodes
        edges.discard(edge)
    else:
        raise InvalidMutation(f"unknown mutation kind {m.kind!r}")

    result = replace(dag, nodes=new_nodes, edges=frozenset(edges))
    report = validate_dag(result)
    if not report.ok:
        raise InvalidMutation(
            f"{m.describe()} leaves {dag.task_id} invalid: {report.violations[0]}",
            report.violations,
        )
    logger.debug(f"Applied {m.describe()} to {dag.task_id}")
    return result


def inverse_mutations(dag: DagTask, m: DagMutation) -> list[DagMutation]:
    """Mutations that undo ``m`` when applied, in order, to ``apply_mutation(dag, m)``."""
    if m.kind is MutationKind.ADD_NODE:
        return [DagMutation(MutationKind.REMOVE_NODE, m.task_id, m.effective_us, node_id=m.node.id)]
    if m.kind is MutationKind.REMOVE_NODE:
        target = m.target
        undo = [DagMutation(MutationKind.ADD_NODE, m.task_id, m.effective_us, node=dag.node(target))]
        for edge in sorted(dag.edges):
            if target in edge:
                undo.append(DagMutation(MutationKind.ADD_EDGE, m.task_id, m.effective_us, edge=edge))
        return undo
    if m.kind is MutationKind.ADD_EDGE:
        return [DagMutation(MutationKind.REMOVE_EDGE, m.task_id, m.effective_us, edge=tuple(m.edge))]
    return [DagMutation(MutationKind.ADD_EDGE, m.task_id, m.effective_us, edge=tuple(m.edge))]


def random_dag(
    rng: random.Random,
    n_nodes: int,
    *,
    task_id: str = "t",
    edge_probability: float = 0.3,
    cost_range_us: tuple[int, int] = (1_000, 50_000),
    deadline_us: int | None = None,
    share_probability: float = 0.0,
    share_groups: tuple[str, ...] = ("g0",),
) -> DagTask:
    """Random DAG whose edges all point from lower to higher node index."""
    ids = [f"n{i:03d}" for i in range(n_nodes)]
    nodes = []
    for node_id in ids:
        group = rng.choice(share_groups) if rng.random() < share_probability else None
        nodes.append(NodeSpec(node_id, rng.randint(*cost_range_us), share_group=group))
    edges = {
        (ids[i], ids[j])
        for i, j in itertools.combinations(range(n_nodes), 2)
        if rng.random() < edge_probability
    }
    if deadline_us is None:
        deadline_us = ms_to_us(rng.randint(1, 100_000))
    return DagTask(task_id, tuple(nodes), frozenset(edges), deadline_us)


def enumerate_dags(n_nodes: int, *, task_id: str = "t", cost_us: int = 1_000,
                   deadline_us: int = 100_000) -> Iterator[DagTask]:
    """Every labelled DAG on ``n_nodes`` nodes whose edges follow index order."""
    ids = [f"n{i}" for i in range(n_nodes)]
    pairs = list(itertools.combinations(ids, 2))
    nodes = tuple(NodeSpec(node_id, cost_us) for node_id in ids)
    for mask in range(1 << len(pairs)):
        edges = frozenset(pair for bit, pair in enumerate(pairs) if mask >> bit & 1)
        yield DagTask(task_id, nodes, edges, deadline_us)
