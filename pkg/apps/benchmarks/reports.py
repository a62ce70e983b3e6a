"""Cross-policy comparison tables."""
from __future__ import annotations

import json
from typing import Sequence

import pandas as pd

from .metrics import MetricsReport

FORMATS = ("csv", "json", "human")
EXTENSIONS = {"csv": "csv", "json": "json", "human": "txt"}


def comparison_frame(reports: Sequence[MetricsReport], lambdas: Sequence[float] = ()) -> pd.DataFrame:
    """One row per (variant, policy, seed): latency, miss/drop rates and QoE per lambda."""
    rows = []
    for report in reports:
        row = {
            "variant": report.variant,
            "policy": report.policy,
            "seed": report.seed,
            "jobs": report.response.count,
            "mean_ms": report.response.mean_ms,
            "p50_ms": report.response.p50_ms,
            "p95_ms": report.response.p95_ms,
            "p99_ms": report.response.p99_ms,
            "max_ms": report.response.max_ms,
            "miss_rate": report.rates.miss_rate,
            "drop_rate": report.rates.drop_rate,
            "miss_drop_rate": report.rates.combined_rate,
            "sync_events": report.sync_events,
        }
        for label in (f"{lam:g}" for lam in lambdas):
            row[f"qoe_{label}"] = report.qoe.get(label)
        rows.append(row)
    frame = pd.DataFrame.from_records(rows)
    if frame.empty:
        return frame
    if not frame["variant"].astype(bool).any():
        frame = frame.drop(columns=["variant"])
    return frame.round(6)


def policy_summary(frame: pd.DataFrame) -> pd.DataFrame:
    """Seeds averaged out: the mean of every numeric column per (variant, policy)."""
    keys = [column for column in ("variant", "policy") if column in frame.columns]
    numeric = frame.drop(columns=["seed"]).groupby(keys, sort=True).mean(numeric_only=True)
    return numeric.reset_index().round(6)


def render(frame: pd.DataFrame, fmt: str) -> str:
    if fmt == "csv":
        return frame.to_csv(index=False)
    if fmt == "json":
        records = json.loads(frame.to_json(orient="records"))
        return json.dumps(records, indent=2, sort_keys=True) + "\n"
    if fmt == "human":
        return (frame.to_string(index=False, na_rep="-") if not frame.empty else "(no runs)") + "\n"
    raise ValueError(f"unknown report format {fmt!r}; expected one of {', '.join(FORMATS)}")


def phase_table(instances, boundaries_us: Sequence[int], task: str | None = None) -> pd.DataFrame:
    """Miss and drop counts per phase, phases split at the given release times."""
    edges = [0, *boundaries_us]
    labels = [f"[{lo / 1_000_000:g}s, {hi / 1_000_000:g}s)" for lo, hi in zip(edges, edges[1:])]
    labels.append(f"[{edges[-1] / 1_000_000:g}s, end)")
    rows = {label: {"phase": label, "released": 0, "late": 0, "dropped": 0} for label in labels}
    for item in instances:
        if task is not None and item.task != task:
            continue
        if item.outcome == "censored":
            continue
        index = sum(1 for boundary in boundaries_us if item.release_us >= boundary)
        row = rows[labels[index]]
        row["released"] += 1
        if item.outcome == "late":
            row["late"] += 1
        elif item.outcome == "dropped":
            row["dropped"] += 1
    frame = pd.DataFrame.from_records(list(rows.values()))
    frame["miss_drop_rate"] = (
        (frame["late"] + frame["dropped"]) / frame["released"].where(frame["released"] > 0)
    ).fillna(0.0).round(6)
    return frame


def histogram_frame(counts: dict[tuple[float, float], int], label: str) -> pd.DataFrame:
    return pd.DataFrame.from_records(
        [{"series": label, "bucket_lo_ms": lo, "bucket_hi_ms": hi, "jobs": n}
         for (lo, hi), n in counts.items()],
        columns=["series", "bucket_lo_ms", "bucket_hi_ms", "jobs"],
    )
