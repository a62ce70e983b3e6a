"""Scenario files: JSON documents validated against a schema before loading.

A file holds either a whole scenario (a ``tasks`` list plus horizon, seed,
execution model, links, faults and refinement settings) or a single DAG,
which loads as a one-task scenario. Durations are milliseconds.
"""
from __future__ import annotations

import json
from pathlib import Path

from apps.dags.formats import (
    DAG_SCHEMA, DURATION, MUTATION_SCHEMA, dag_from_dict, dag_to_dict, mutation_from_dict,
    mutation_to_dict, schema_errors,
)
from apps.dags.graph import ValidationReport, Violation, ms_to_us, us_to_ms
from apps.dags.refinement import RefineConfig

from .workload import (
    Constant, ExecutionModel, Fault, FaultKind, Link, Scenario, TruncNormal, Uniform,
    validate_scenario,
)

DISTRIBUTION_SCHEMA = {
    "type": "object",
    "required": ["task", "node", "dist"],
    "properties": {
        "task": {"type": "string"},
        "node": {"type": "string"},
        "dist": {"enum": ["constant", "uniform", "trunc_normal"]},
        "cost_ms": DURATION,
        "lo_ms": DURATION,
        "hi_ms": DURATION,
        "mean_ms": DURATION,
        "sd_ms": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

LINK_SCHEMA = {
    "type": "object",
    "required": ["src_task", "src_node", "dst_task", "dst_node"],
    "properties": {
        "src_task": {"type": "string"},
        "src_node": {"type": "string"},
        "dst_task": {"type": "string"},
        "dst_node": {"type": "string"},
        "max_staleness_ms": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

FAULT_SCHEMA = {
    "type": "object",
    "required": ["task", "node", "job", "kind"],
    "properties": {
        "task": {"type": "string"},
        "node": {"type": "string"},
        "job": {"type": "integer", "minimum": 0},
        "kind": {"enum": [kind.value for kind in FaultKind]},
        "block_ms": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

REFINE_SCHEMA = {
    "type": "object",
    "properties": {
        "gamma_ms": {"type": "number", "minimum": 0},
        "batch_base_ms": {"type": "number", "minimum": 0},
        "batch_per_item_ms": {"type": "number", "minimum": 0},
        "merge_surcharge_ms": {"type": "number", "minimum": 0},
        "split_ratios": {
            "type": "object",
            "additionalProperties": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        },
        "default_split_ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "batch_decoders": {"type": "boolean"},
    },
    "additionalProperties": False,
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["tasks", "horizon_ms"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "horizon_ms": DURATION,
        "seed": {"type": "integer", "minimum": 0},
        "interference": {"type": "number", "minimum": 1},
        "tasks": {"type": "array", "items": DAG_SCHEMA},
        "mutations": {
            "type": "array",
            "items": {**MUTATION_SCHEMA, "required": ["at_ms", "kind", "task"]},
        },
        "exec_model": {"type": "array", "items": DISTRIBUTION_SCHEMA},
        "links": {"type": "array", "items": LINK_SCHEMA},
        "faults": {"type": "array", "items": FAULT_SCHEMA},
        "refine": REFINE_SCHEMA,
    },
    "additionalProperties": False,
}


def is_scenario_document(document) -> bool:
    return isinstance(document, dict) and "tasks" in document


def document_errors(document) -> list[str]:
    schema = SCENARIO_SCHEMA if is_scenario_document(document) else DAG_SCHEMA
    return schema_errors(document, schema)


def _distribution(data: dict):
    kind = data["dist"]
    try:
        if kind == "constant":
            return Constant(ms_to_us(data["cost_ms"]))
        if kind == "uniform":
            return Uniform(ms_to_us(data["lo_ms"]), ms_to_us(data["hi_ms"]))
        return TruncNormal(ms_to_us(data["mean_ms"]), ms_to_us(data.get("sd_ms", 0)),
                           ms_to_us(data["lo_ms"]), ms_to_us(data["hi_ms"]))
    except KeyError as exc:
        raise ValueError(f"{data['task']}/{data['node']}: {kind} needs {exc.args[0]}") from None


def _distribution_to_dict(task_id: str, node_id: str, dist) -> dict:
    data = {"task": task_id, "node": node_id}
    if isinstance(dist, Constant):
        data.update(dist="constant", cost_ms=us_to_ms(dist.cost_us))
    elif isinstance(dist, Uniform):
        data.update(dist="uniform", lo_ms=us_to_ms(dist.lo_us), hi_ms=us_to_ms(dist.hi_us))
    else:
        data.update(dist="trunc_normal", mean_ms=us_to_ms(dist.mean_us), sd_ms=us_to_ms(dist.sd_us),
                    lo_ms=us_to_ms(dist.lo_us), hi_ms=us_to_ms(dist.hi_us))
    return data


def refine_from_dict(data: dict) -> RefineConfig:
    defaults = RefineConfig()
    return RefineConfig(
        gamma_us=ms_to_us(data["gamma_ms"]) if "gamma_ms" in data else defaults.gamma_us,
        batch_base_us=ms_to_us(data.get("batch_base_ms", 0)),
        batch_per_item_us=ms_to_us(data.get("batch_per_item_ms", 0)),
        split_ratios=dict(data.get("split_ratios", {})),
        default_split_ratio=data.get("default_split_ratio", defaults.default_split_ratio),
        merge_surcharge_us=ms_to_us(data.get("merge_surcharge_ms", 0)),
        batch_decoders=data.get("batch_decoders", False),
    )


def refine_to_dict(cfg: RefineConfig) -> dict:
    data = {"gamma_ms": us_to_ms(cfg.gamma_us), "default_split_ratio": cfg.default_split_ratio}
    if cfg.batch_base_us:
        data["batch_base_ms"] = us_to_ms(cfg.batch_base_us)
    if cfg.batch_per_item_us:
        data["batch_per_item_ms"] = us_to_ms(cfg.batch_per_item_us)
    if cfg.merge_surcharge_us:
        data["merge_surcharge_ms"] = us_to_ms(cfg.merge_surcharge_us)
    if cfg.split_ratios:
        data["split_ratios"] = dict(cfg.split_ratios)
    if cfg.batch_decoders:
        data["batch_decoders"] = True
    return data


def scenario_from_dict(document: dict, name: str = "scenario") -> Scenario:
    """Build a Scenario from an already schema-checked document."""
    if not is_scenario_document(document):
        dag, mutations = dag_from_dict(document)
        last_release = dag.period_us * ((dag.max_jobs or 1) - 1) if dag.period_us else 0
        horizon = dag.offset_us + last_release + dag.deadline_us
        return Scenario(name=dag.task_id, tasks=(dag,), mutations=tuple(mutations), horizon_us=horizon)

    tasks, mutations = [], []
    for task_doc in document["tasks"]:
        dag, inline = dag_from_dict(task_doc)
        tasks.append(dag)
        mutations.extend(inline)
    mutations.extend(mutation_from_dict(m, m["task"]) for m in document.get("mutations", []))
    model = ExecutionModel({
        (item["task"], item["node"]): _distribution(item) for item in document.get("exec_model", [])
    })
    links = tuple(
        Link(item["src_task"], item["src_node"], item["dst_task"], item["dst_node"],
             ms_to_us(item.get("max_staleness_ms", 0)))
        for item in document.get("links", [])
    )
    faults = tuple(
        Fault(item["task"], item["node"], item["job"], FaultKind(item["kind"]),
              ms_to_us(item.get("block_ms", 0)))
        for item in document.get("faults", [])
    )
    return Scenario(
        name=document.get("name", name),
        tasks=tuple(tasks),
        mutations=tuple(mutations),
        exec_model=model,
        horizon_us=ms_to_us(document["horizon_ms"]),
        seed=document.get("seed", 0),
        interference=float(document.get("interference", 1.0)),
        links=links,
        faults=faults,
        refine=refine_from_dict(document.get("refine", {})),
        description=document.get("description", ""),
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    document = {
        "name": scenario.name,
        "horizon_ms": us_to_ms(scenario.horizon_us),
        "seed": scenario.seed,
        "tasks": [dag_to_dict(task) for task in scenario.tasks],
        "refine": refine_to_dict(scenario.refine),
    }
    if scenario.description:
        document["description"] = scenario.description
    if scenario.interference != 1.0:
        document["interference"] = scenario.interference
    if scenario.mutations:
        document["mutations"] = [
            {**mutation_to_dict(m), "task": m.task_id} for m in scenario.ordered_mutations()
        ]
    if scenario.exec_model.distributions:
        document["exec_model"] = [
            _distribution_to_dict(task_id, node_id, dist)
            for (task_id, node_id), dist in sorted(scenario.exec_model.distributions.items())
        ]
    if scenario.links:
        document["links"] = [
            {"src_task": link.src_task, "src_node": link.src_node, "dst_task": link.dst_task,
             "dst_node": link.dst_node, "max_staleness_ms": us_to_ms(link.max_staleness_us)}
            for link in scenario.links
        ]
    if scenario.faults:
        document["faults"] = [
            {"task": f.task, "node": f.node, "job": f.job, "kind": f.kind.value,
             **({"block_ms": us_to_ms(f.block_us)} if f.kind is FaultKind.BLOCK else {})}
            for f in scenario.faults
        ]
    return document


def check_document(document, name: str = "scenario") -> tuple[Scenario | None, ValidationReport]:
    """Schema check, then structural and scenario checks. Never raises on bad input."""
    errors = document_errors(document)
    if errors:
        return None, ValidationReport(tuple(Violation("schema", "file", line) for line in errors))
    try:
        scenario = scenario_from_dict(document, name)
    except ValueError as exc:
        return None, ValidationReport((Violation("schema", "file", str(exc)),))
    return scenario, validate_scenario(scenario)


def read_document(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from exc


def load_scenario(path) -> tuple[Scenario | None, ValidationReport]:
    return check_document(read_document(path), Path(path).stem)


def dump_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
