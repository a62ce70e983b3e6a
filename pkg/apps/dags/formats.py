"""DAG description files.

A DAG is written as a JSON object; durations are milliseconds in files and
microseconds in memory. See docs/scenario_format.md for the full layout.
"""
from __future__ import annotations

import json
from pathlib import Path

from jsonschema import Draft7Validator

from .graph import DagMutation, DagTask, MutationKind, NodeKind, NodeSpec, ms_to_us, us_to_ms

DURATION = {"type": "number", "exclusiveMinimum": 0}

NODE_SCHEMA = {
    "type": "object",
    "required": ["id", "cost_ms"],
    "properties": {
        "id": {"type": "string", "minLength": 1},
        "cost_ms": DURATION,
        "kind": {"enum": [kind.value for kind in NodeKind]},
        "share_group": {"type": ["string", "null"]},
        "decoder_of": {"type": ["string", "null"]},
        "deadline_ms": {"oneOf": [DURATION, {"type": "null"}]},
    },
    "additionalProperties": False,
}

EDGE_SCHEMA = {
    "type": "array",
    "items": {"type": "string"},
    "minItems": 2,
    "maxItems": 2,
}

MUTATION_SCHEMA = {
    "type": "object",
    "required": ["at_ms", "kind"],
    "properties": {
        "at_ms": {"type": "number", "minimum": 0},
        "task": {"type": "string"},
        "kind": {"enum": [kind.value for kind in MutationKind]},
        "node": NODE_SCHEMA,
        "node_id": {"type": "string"},
        "edge": EDGE_SCHEMA,
    },
    "additionalProperties": False,
}

DAG_SCHEMA = {
    "type": "object",
    "required": ["task_id", "deadline_ms", "nodes"],
    "properties": {
        "task_id": {"type": "string", "minLength": 1},
        "deadline_ms": DURATION,
        "period_ms": {"oneOf": [DURATION, {"type": "null"}]},
        "offset_ms": {"type": "number", "minimum": 0},
        "max_jobs": {"type": ["integer", "null"], "minimum": 1},
        "nodes": {"type": "array", "items": NODE_SCHEMA},
        "edges": {"type": "array", "items": EDGE_SCHEMA},
        "mutations": {"type": "array", "items": MUTATION_SCHEMA},
    },
}


def schema_errors(document, schema) -> list[str]:
    """Schema violations as ``path: message`` lines, path joined with '/'."""
    validator = Draft7Validator(schema)
    errors = sorted(validator.iter_errors(document), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    lines = []
    for error in errors:
        path = "/".join(str(part) for part in error.absolute_path) or "<root>"
        lines.append(f"{path}: {error.message}")
    return lines


def node_from_dict(data: dict) -> NodeSpec:
    deadline = data.get("deadline_ms")
    return NodeSpec(
        id=data["id"],
        cost_us=ms_to_us(data["cost_ms"]),
        kind=NodeKind(data.get("kind", NodeKind.MONOLITHIC.value)),
        share_group=data.get("share_group"),
        decoder_of=data.get("decoder_of"),
        deadline_us=ms_to_us(deadline) if deadline is not None else None,
    )


def node_to_dict(node: NodeSpec) -> dict:
    data = {"id": node.id, "cost_ms": us_to_ms(node.cost_us), "kind": node.kind.value}
    if node.share_group is not None:
        data["share_group"] = node.share_group
    if node.decoder_of is not None:
        data["decoder_of"] = node.decoder_of
    if node.deadline_us is not None:
        data["deadline_ms"] = us_to_ms(node.deadline_us)
    return data


def mutation_from_dict(data: dict, task_id: str) -> DagMutation:
    node = data.get("node")
    edge = data.get("edge")
    return DagMutation(
        kind=MutationKind(data["kind"]),
        task_id=data.get("task", task_id),
        effective_us=ms_to_us(data["at_ms"]),
        node=node_from_dict(node) if node else None,
        node_id=data.get("node_id"),
        edge=tuple(edge) if edge else None,
    )


def mutation_to_dict(mutation: DagMutation) -> dict:
    data = {"at_ms": us_to_ms(mutation.effective_us), "kind": mutation.kind.value}
    if mutation.node is not None:
        data["node"] = node_to_dict(mutation.node)
    if mutation.node_id is not None:
        data["node_id"] = mutation.node_id
    if mutation.edge is not None:
        data["edge"] = list(mutation.edge)
    return data


def dag_from_dict(data: dict) -> tuple[DagTask, list[DagMutation]]:
    period = data.get("period_ms")
    dag = DagTask(
        task_id=data["task_id"],
        nodes=tuple(node_from_dict(node) for node in data["nodes"]),
        edges=frozenset(tuple(edge) for edge in data.get("edges", [])),
        deadline_us=ms_to_us(data["deadline_ms"]),
        period_us=ms_to_us(period) if period is not None else None,
        offset_us=ms_to_us(data.get("offset_ms", 0)),
        max_jobs=data.get("max_jobs"),
    )
    mutations = [mutation_from_dict(m, dag.task_id) for m in data.get("mutations", [])]
    return dag, mutations


def dag_to_dict(dag: DagTask, mutations=()) -> dict:
    data = {
        "task_id": dag.task_id,
        "deadline_ms": us_to_ms(dag.deadline_us),
        "nodes": [node_to_dict(node) for node in dag.nodes],
        "edges": [list(edge) for edge in sorted(dag.edges)],
    }
    if dag.period_us is not None:
        data["period_ms"] = us_to_ms(dag.period_us)
    if dag.offset_us:
        data["offset_ms"] = us_to_ms(dag.offset_us)
    if dag.max_jobs is not None:
        data["max_jobs"] = dag.max_jobs
    if mutations:
        data["mutations"] = [mutation_to_dict(m) for m in mutations]
    return data


def load_dag(path) -> tuple[DagTask, list[DagMutation]]:
    return dag_from_dict(json.loads(Path(path).read_text()))


def dump_dag(dag: DagTask, path, mutations=()) -> None:
    Path(path).write_text(json.dumps(dag_to_dict(dag, mutations), indent=2, sort_keys=True) + "\n")
