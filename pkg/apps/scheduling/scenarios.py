"""Builtin scenarios: the cruising minibenchmark and the motivating case studies.

Stage costs of the minibenchmark are synthetic. They are scaled per
platform so that the tight deadline sits just above the unrefined
obstacle-phase makespan and the loose one comfortably above it.
"""
from __future__ import annotations

from dataclasses import replace
from typing import NamedTuple

from apps.dags.exceptions import UnknownCaseStudy, UnknownPlatform
from apps.dags.graph import DagMutation, DagTask, MutationKind, NodeSpec, ms_to_us
from apps.dags.refinement import RefineConfig

from .workload import Constant, ExecutionModel, Link, Scenario, TruncNormal

SHARE_GROUP = "mimo"
GAMMA_US = 100_000
JOBS_PER_PHASE = 10

# Stage samples as fractions of the profiled cost. Near the profile, the
# unrefined obstacle phase overruns the level that holds S and O on a tight
# deadline; the refined graph, which runs their encoders once, does not.
SAMPLE_MEAN, SAMPLE_SD, SAMPLE_LO, SAMPLE_HI = 0.97, 0.03, 0.9, 1.05


class PlatformProfile(NamedTuple):
    name: str
    tight_ms: int
    loose_ms: int


PLATFORMS = {
    "nano": PlatformProfile("nano", 9815, 11325),
    "tx2": PlatformProfile("tx2", 8400, 10080),
    "xavier": PlatformProfile("xavier", 6500, 7315),
    "orin": PlatformProfile("orin", 2400, 3600),
}

# Worst-case stage costs on the reference (nano) platform, in ms.
# L: lane detection, S: segmentation, O: obstacle detection, C: control.
REFERENCE_STAGE_MS = {"L": 2400, "S": 2800, "O": 2600, "C": 1600}
REFERENCE_TIGHT_MS = PLATFORMS["nano"].tight_ms

TIGHTNESS = ("tight", "loose")
CASE_STUDIES = ("dynamic-workload", "async-dependent", "async-independent")


def platform(name: str) -> PlatformProfile:
    try:
        return PLATFORMS[name.lower()]
    except KeyError:
        raise UnknownPlatform(f"unknown platform {name!r}; expected one of {', '.join(PLATFORMS)}") from None


def stage_costs_us(profile: PlatformProfile) -> dict[str, int]:
    scale = profile.tight_ms / REFERENCE_TIGHT_MS
    return {stage: ms_to_us(cost * scale) for stage, cost in REFERENCE_STAGE_MS.items()}


def _stage_model(task_id: str, costs: dict[str, int]) -> ExecutionModel:
    """Stage run times centred just under the profiled cost, with a short tail above it."""
    return ExecutionModel({
        (task_id, stage): TruncNormal(int(SAMPLE_MEAN * wcet), int(SAMPLE_SD * wcet),
                                      int(SAMPLE_LO * wcet), int(SAMPLE_HI * wcet))
        for stage, wcet in costs.items()
    })


def generate_minibench(profile: PlatformProfile | str, tightness: str = "tight", *,
                       deadline_ms: float | None = None, seed: int = 0,
                       jobs_per_phase: int = JOBS_PER_PHASE,
                       gamma_us: int = GAMMA_US) -> Scenario:
    """Obstacle-free cruising (L -> S -> C) followed by obstacle cruising (L -> S+O -> C).

    Jobs run back to back, one per period; the obstacle detector joins the
    DAG after ``jobs_per_phase`` jobs.
    """
    if isinstance(profile, str):
        profile = platform(profile)
    if tightness not in TIGHTNESS:
        raise ValueError(f"tightness must be one of {TIGHTNESS}, got {tightness!r}")
    costs = stage_costs_us(profile)
    deadline_us = ms_to_us(deadline_ms) if deadline_ms is not None else ms_to_us(
        profile.tight_ms if tightness == "tight" else profile.loose_ms)
    period_us = max(deadline_us, ms_to_us(profile.loose_ms))

    def stage(name, group=SHARE_GROUP):
        return NodeSpec(name, costs[name], share_group=group)

    task = DagTask(
        task_id="cruise",
        nodes=(stage("L"), stage("S"), stage("C", group=None)),
        edges=frozenset({("L", "S"), ("S", "C")}),
        deadline_us=deadline_us,
        period_us=period_us,
        max_jobs=2 * jobs_per_phase,
    )
    obstacle_at = jobs_per_phase * period_us
    mutations = (
        DagMutation(MutationKind.ADD_NODE, "cruise", obstacle_at, node=stage("O")),
        DagMutation(MutationKind.ADD_EDGE, "cruise", obstacle_at, edge=("L", "O")),
        DagMutation(MutationKind.ADD_EDGE, "cruise", obstacle_at, edge=("O", "C")),
    )
    return Scenario(
        name=f"minibench:{profile.name}:{tightness}",
        tasks=(task,),
        mutations=mutations,
        exec_model=_stage_model("cruise", costs),
        horizon_us=(2 * jobs_per_phase + 1) * period_us,
        seed=seed,
        refine=RefineConfig(gamma_us=gamma_us),
        description=f"synthetic stage costs scaled to {profile.name}",
    )


def deadline_sweep(profile: PlatformProfile | str, steps: int = 6) -> list[float]:
    """End-to-end deadlines (ms) evenly spaced from tight to loose."""
    if isinstance(profile, str):
        profile = platform(profile)
    if steps < 2:
        return [float(profile.tight_ms)]
    span = profile.loose_ms - profile.tight_ms
    return [round(profile.tight_ms + span * i / (steps - 1), 3) for i in range(steps)]


def dynamic_workload(branch_only: bool = False, seed: int = 0) -> Scenario:
    """A -> B at 20 Hz; an obstacle inserts C between them from 3 s to 6 s.

    Deadlines are pinned per node (A 50 ms, B 30 ms, C 50 ms), so while C
    is present a job needs 130 ms end to end and a new one arrives every 50 ms.
    """
    nodes = (
        NodeSpec("A", ms_to_us(12), deadline_us=ms_to_us(50)),
        NodeSpec("B", ms_to_us(18), deadline_us=ms_to_us(30)),
    )
    task = DagTask("drive", nodes, frozenset({("A", "B")}), deadline_us=ms_to_us(130),
                   period_us=ms_to_us(50))
    enter, leave = ms_to_us(3000), ms_to_us(6000)
    obstacle = NodeSpec("C", ms_to_us(35), deadline_us=ms_to_us(50))
    if branch_only:
        appear = [
            DagMutation(MutationKind.ADD_NODE, "drive", enter, node=obstacle),
            DagMutation(MutationKind.ADD_EDGE, "drive", enter, edge=("A", "C")),
        ]
    else:
        appear = [
            DagMutation(MutationKind.REMOVE_EDGE, "drive", enter, edge=("A", "B")),
            DagMutation(MutationKind.ADD_NODE, "drive", enter, node=obstacle),
            DagMutation(MutationKind.ADD_EDGE, "drive", enter, edge=("A", "C")),
            DagMutation(MutationKind.ADD_EDGE, "drive", enter, edge=("C", "B")),
        ]
    clear = [DagMutation(MutationKind.REMOVE_NODE, "drive", leave, node_id="C")]
    if not branch_only:
        clear.append(DagMutation(MutationKind.ADD_EDGE, "drive", leave, edge=("A", "B")))

    def spread(cost_ms):
        wcet = ms_to_us(cost_ms)
        return TruncNormal(int(0.95 * wcet), int(0.02 * wcet), int(0.9 * wcet), wcet)

    model = ExecutionModel({
        ("drive", "A"): spread(12),
        ("drive", "B"): spread(18),
        ("drive", "C"): spread(35),
    })
    return Scenario(
        name="case:dynamic-workload",
        tasks=(task,),
        mutations=tuple(appear + clear),
        exec_model=model,
        horizon_us=ms_to_us(9000),
        seed=seed,
        description="obstacle appears at 3 s and clears at 6 s",
    )


def async_tasks(dependent: bool, seed: int = 0) -> Scenario:
    """Task A at 30 Hz and task B at 33 Hz, both with a 30 ms deadline.

    In the dependent variant B consumes A's output and refuses input older
    than 20 ms, so it regularly waits for A's next job.
    """
    a = DagTask("A", (NodeSpec("infer", ms_to_us(12)),), deadline_us=ms_to_us(30),
                period_us=33_333)
    b = DagTask("B", (NodeSpec("infer", ms_to_us(14)),), deadline_us=ms_to_us(30),
                period_us=30_303)
    links = (Link("A", "infer", "B", "infer", ms_to_us(20)),) if dependent else ()
    variant = "async-dependent" if dependent else "async-independent"
    return Scenario(
        name=f"case:{variant}",
        tasks=(a, b),
        exec_model=ExecutionModel({("A", "infer"): Constant(ms_to_us(12)),
                                   ("B", "infer"): Constant(ms_to_us(14))}),
        horizon_us=ms_to_us(3000),
        seed=seed,
        links=links,
        description="B depends on fresh output of A" if dependent else "A and B run independently",
    )


def generate_case_study(which: str, seed: int = 0) -> Scenario:
    if which == "dynamic-workload":
        return dynamic_workload(seed=seed)
    if which == "async-dependent":
        return async_tasks(True, seed=seed)
    if which == "async-independent":
        return async_tasks(False, seed=seed)
    raise UnknownCaseStudy(f"unknown case study {which!r}; expected one of {', '.join(CASE_STUDIES)}")


def builtin_names() -> list[str]:
    names = [f"minibench:{name}:{tightness}" for name in PLATFORMS for tightness in TIGHTNESS]
    return names + [f"case:{which}" for which in CASE_STUDIES]


def builtin(name: str, seed: int = 0) -> Scenario:
    """Resolve ``minibench:<platform>:<tight|loose>`` or ``case:<name>``."""
    parts = name.split(":")
    if parts[0] == "minibench" and len(parts) == 3 and parts[1] in PLATFORMS and parts[2] in TIGHTNESS:
        return generate_minibench(parts[1], parts[2], seed=seed)
    if parts[0] == "case" and len(parts) == 2 and parts[1] in CASE_STUDIES:
        return generate_case_study(parts[1], seed=seed)
    raise UnknownPlatform(f"unknown builtin {name!r}; valid builtins: {', '.join(builtin_names())}")


def with_seed(scenario: Scenario, seed: int) -> Scenario:
    return replace(scenario, seed=seed)
