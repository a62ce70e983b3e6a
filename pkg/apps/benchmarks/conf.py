"""Library configuration built from the RED_BENCH settings dict."""
from __future__ import annotations

from pathlib import Path

from django.conf import settings

from apps.dags.graph import ms_to_us
from apps.dags.refinement import RefineConfig
from apps.scheduling.scheduler import DropPolicy, Policy, SchedulerConfig

DEFAULTS = {
    "GAMMA_MS": 100,
    "SYNC_INTERVAL_MS": 100,
    "SYNC_COST_MS": 2.0,
    "DECISION_COST_MS": 0.5,
    "BLOCKING_MS": 0,
    "DROP_POLICY": DropPolicy.DROP_NODE.value,
    "SPLIT_RATIO": 0.6,
    "BATCH_BASE_MS": 0,
    "BATCH_PER_ITEM_MS": 0,
    "QOE_LAMBDAS": [0.001, 0.01, 0.1, 1, 10],
    "QOE_TIME_UNIT_MS": 1000,
    "QOE_REPORT_LAMBDA": 1,
    "DEADLINE_QUANTUM_US": 1000,
    "OUTPUT_DIR": "bench_output",
    "WORKERS": 1,
}


def bench_setting(name: str):
    return getattr(settings, "RED_BENCH", {}).get(name, DEFAULTS[name])


def scheduler_config(policy: Policy | str = Policy.RED, **overrides) -> SchedulerConfig:
    values = dict(
        policy=Policy(policy),
        sync_interval_us=ms_to_us(bench_setting("SYNC_INTERVAL_MS")),
        sync_cost_us=ms_to_us(bench_setting("SYNC_COST_MS")),
        decision_cost_us=ms_to_us(bench_setting("DECISION_COST_MS")),
        blocking_us=ms_to_us(bench_setting("BLOCKING_MS")),
        drop_policy=DropPolicy(bench_setting("DROP_POLICY")),
        quantum_us=int(bench_setting("DEADLINE_QUANTUM_US")),
    )
    values.update(overrides)
    return SchedulerConfig(**values)


def refine_config(**overrides) -> RefineConfig:
    values = dict(
        gamma_us=ms_to_us(bench_setting("GAMMA_MS")),
        default_split_ratio=float(bench_setting("SPLIT_RATIO")),
        batch_base_us=ms_to_us(bench_setting("BATCH_BASE_MS")),
        batch_per_item_us=ms_to_us(bench_setting("BATCH_PER_ITEM_MS")),
    )
    values.update(overrides)
    return RefineConfig(**values)


def qoe_lambdas() -> list[float]:
    return [float(value) for value in bench_setting("QOE_LAMBDAS")]


def qoe_time_unit_us() -> int:
    return ms_to_us(bench_setting("QOE_TIME_UNIT_MS"))


def qoe_report_lambda() -> float:
    return float(bench_setting("QOE_REPORT_LAMBDA"))


def output_dir() -> Path:
    return Path(bench_setting("OUTPUT_DIR"))


def workers() -> int:
    return max(1, int(bench_setting("WORKERS")))
