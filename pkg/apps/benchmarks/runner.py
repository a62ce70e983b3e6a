"""Policy sweeps: every (variant, policy, seed) triple simulated and reported.

A *variant* is one rewrite of the base scenario (an end-to-end deadline
from the sweep, a gamma override). Pairs are independent single-threaded
simulations, so a sweep fans them out over a process pool when asked to.
"""
from __future__ import annotations

import json
import logging
import uuid
from dataclasses import dataclass, field, replace
from datetime import date
from multiprocessing import Pool
from pathlib import Path
from typing import NamedTuple, Sequence

import pandas as pd

from apps.dags.exceptions import ScenarioInvalid, UnknownPlatform
from apps.dags.refinement import RefineConfig
from apps.scheduling.scenario_files import load_scenario
from apps.scheduling.scenarios import PLATFORMS, TIGHTNESS, builtin, deadline_sweep, generate_minibench
from apps.scheduling.scheduler import Policy, SchedulerConfig
from apps.scheduling.simulator import run
from apps.scheduling.trace import EventTrace
from apps.scheduling.workload import Scenario

from .metrics import MetricsReport, compute_report, histogram
from .reports import EXTENSIONS, FORMATS, comparison_frame, histogram_frame, policy_summary, render

logger = logging.getLogger('benchmarks')

DEFAULT_LAMBDAS = (0.001, 0.01, 0.1, 1, 10)


@dataclass(frozen=True)
class RunSpec:
    scenario: str
    policies: tuple[Policy, ...]
    seeds: tuple[int, ...]
    output_dir: Path
    formats: tuple[str, ...] = FORMATS
    lambdas: tuple[float, ...] = DEFAULT_LAMBDAS
    time_unit_us: int = 1_000_000
    config: SchedulerConfig = field(default_factory=SchedulerConfig)
    gammas_us: tuple[int, ...] = ()
    deadline_steps: int = 0
    workers: int = 1
    # builtin scenarios take this refinement; scenario files keep their own
    refine: RefineConfig | None = None
    bucket_ms: float = 5.0
    qoe_lambda: float = 1.0

    def __post_init__(self):
        if not self.policies:
            raise ValueError("at least one policy is required")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        object.__setattr__(self, "policies", tuple(Policy(p) for p in self.policies))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        unknown = [fmt for fmt in self.formats if fmt not in FORMATS]
        if unknown:
            raise ValueError(f"unknown report format(s) {', '.join(unknown)}; expected {', '.join(FORMATS)}")
        if any(seed < 0 for seed in self.seeds):
            raise ValueError("seeds must be >= 0")
        if any(gamma < 0 for gamma in self.gammas_us):
            raise ValueError("gamma must be >= 0")
        if self.deadline_steps < 0:
            raise ValueError("deadline steps must be >= 0")
        if self.bucket_ms <= 0:
            raise ValueError("histogram bucket width must be > 0")
        if float(self.qoe_lambda) not in {float(lam) for lam in self.lambdas}:
            raise ValueError(f"recorded QoE lambda {self.qoe_lambda:g} is not in the lambda grid")


class PairResult(NamedTuple):
    variant: str
    policy: str
    seed: int
    trace_jsonl: str
    report: MetricsReport

    @property
    def stem(self) -> str:
        prefix = f"{self.variant}_" if self.variant else ""
        return f"{prefix}{self.policy}_seed{self.seed}"


@dataclass
class SweepResult:
    spec: RunSpec
    pairs: list[PairResult]
    written: list[Path] = field(default_factory=list)

    @property
    def reports(self) -> list[MetricsReport]:
        return [pair.report for pair in self.pairs]

    def comparison(self):
        return comparison_frame(self.reports, self.spec.lambdas)


def _is_scenario_file(name: str) -> bool:
    path = Path(name)
    return path.suffix == ".json" or path.is_file()


def resolve_scenario(name: str) -> Scenario:
    """A path to a scenario file, or a builtin name such as ``minibench:xavier:tight``."""
    path = Path(name)
    if _is_scenario_file(name):
        if not path.is_file():
            raise UnknownPlatform(f"scenario file {name} does not exist")
        try:
            scenario, report = load_scenario(path)
        except ValueError as exc:
            raise ScenarioInvalid([str(exc)]) from exc
        if scenario is None or not report.ok:
            raise ScenarioInvalid(report.violations)
        return scenario
    return builtin(name)


def _minibench_parts(name: str) -> tuple[str, str]:
    parts = name.split(":")
    if len(parts) != 3 or parts[0] != "minibench" or parts[1] not in PLATFORMS or parts[2] not in TIGHTNESS:
        raise ValueError(f"a deadline sweep needs a minibench builtin, got {name!r}")
    return parts[1], parts[2]


def build_variants(spec: RunSpec) -> list[tuple[str, Scenario]]:
    if spec.deadline_steps:
        profile, tightness = _minibench_parts(spec.scenario)
        variants = [
            (f"D{deadline:g}ms", generate_minibench(profile, tightness, deadline_ms=deadline))
            for deadline in deadline_sweep(profile, spec.deadline_steps)
        ]
    else:
        variants = [("", resolve_scenario(spec.scenario))]

    if spec.refine is not None and (spec.deadline_steps or not _is_scenario_file(spec.scenario)):
        variants = [(label, replace(s, refine=spec.refine)) for label, s in variants]

    if len(spec.gammas_us) == 1:
        gamma = spec.gammas_us[0]
        variants = [(label, replace(s, refine=replace(s.refine, gamma_us=gamma))) for label, s in variants]
    elif spec.gammas_us:
        variants = [
            ("_".join(filter(None, (label, f"gamma{gamma / 1000:g}ms"))),
             replace(s, refine=replace(s.refine, gamma_us=gamma)))
            for label, s in variants
            for gamma in spec.gammas_us
        ]
    return variants


def run_pair(variant: str, scenario: Scenario, config: SchedulerConfig, seed: int,
             lambdas: Sequence[float], time_unit_us: int) -> PairResult:
    """One isolated simulation. Module level so a process pool can pickle it."""
    trace = run(replace(scenario, seed=seed), config)
    report = compute_report(trace, lambdas=lambdas, time_unit_us=time_unit_us, scenario=scenario.name,
                            policy=config.policy.value, seed=seed, variant=variant)
    # traces carry read-only payload mappings, which do not pickle; ship the text instead
    return PairResult(variant, config.policy.value, seed, trace.to_jsonl(), report)


def _run_pair(args) -> PairResult:
    return run_pair(*args)


def run_sweep(spec: RunSpec, variants: list[tuple[str, Scenario]] | None = None) -> SweepResult:
    if variants is None:
        variants = build_variants(spec)
    jobs = [
        (label, scenario, spec.config.with_policy(policy), seed, spec.lambdas, spec.time_unit_us)
        for label, scenario in variants
        for policy in spec.policies
        for seed in spec.seeds
    ]
    logger.info(f"Sweeping {spec.scenario}: {len(variants)} variant(s), {len(jobs)} run(s), "
                f"{spec.workers} worker(s)")
    if spec.workers > 1 and len(jobs) > 1:
        with Pool(processes=min(spec.workers, len(jobs))) as pool:
            pairs = pool.map(_run_pair, jobs)
    else:
        pairs = [_run_pair(job) for job in jobs]
    return SweepResult(spec, list(pairs))


def write_artifacts(result: SweepResult) -> list[Path]:
    """Per-pair traces and reports, then the histogram, comparison and summary tables."""
    root = result.spec.output_dir
    traces, reports = root / "traces", root / "reports"
    traces.mkdir(parents=True, exist_ok=True)
    reports.mkdir(parents=True, exist_ok=True)
    written, histograms = [], []
    for pair in result.pairs:
        trace = EventTrace.from_jsonl(pair.trace_jsonl.splitlines())
        jsonl_path = traces / f"{pair.stem}.jsonl"
        jsonl_path.write_text(pair.trace_jsonl, encoding="utf-8")
        csv_path = traces / f"{pair.stem}.csv"
        trace.write_csv(csv_path)
        report_path = reports / f"{pair.stem}.json"
        report_path.write_text(json.dumps(pair.report.to_dict(), indent=2, sort_keys=True) + "\n",
                               encoding="utf-8")
        written += [jsonl_path, csv_path, report_path]
        histograms.append(histogram_frame(histogram(trace, result.spec.bucket_ms), pair.stem))

    histogram_path = root / "histograms.csv"
    histogram_path.write_text(pd.concat(histograms, ignore_index=True).to_csv(index=False), encoding="utf-8")
    written.append(histogram_path)

    frame = result.comparison()
    tables = {"comparison": frame, "summary": policy_summary(frame)}
    for fmt in result.spec.formats:
        for name, table in tables.items():
            path = root / f"{name}.{EXTENSIONS[fmt]}"
            path.write_text(render(table, fmt), encoding="utf-8")
            written.append(path)
    result.written = written
    logger.info(f"Wrote {len(written)} artifact(s) to {root}")
    return written


def generate_run_id() -> str:
    return f"RB-{date.today().strftime('%Y%m%d')}-{str(uuid.uuid4())[:8].upper()}"


def record_run(result: SweepResult, notes: str = ""):
    """Persist a finished sweep as a BenchmarkRun with one PolicyResult per pair."""
    from django.db import transaction

    from .models import BenchmarkRun, PolicyResult

    spec = result.spec
    with transaction.atomic():
        bench_run = BenchmarkRun.objects.create(
            run_id=generate_run_id(),
            scenario=spec.scenario,
            policies=",".join(p.value for p in spec.policies),
            seeds=",".join(str(s) for s in spec.seeds),
            output_dir=str(spec.output_dir),
            status='completed',
            notes=notes,
        )
        for pair in result.pairs:
            report = pair.report
            trace = EventTrace.from_jsonl(pair.trace_jsonl.splitlines())
            PolicyResult.objects.create(
                run=bench_run,
                policy=pair.policy,
                seed=pair.seed,
                variant=pair.variant,
                mean_ms=report.response.mean_ms,
                p50_ms=report.response.p50_ms,
                p95_ms=report.response.p95_ms,
                p99_ms=report.response.p99_ms,
                max_ms=report.response.max_ms,
                miss_rate=report.miss_rate,
                drop_rate=report.drop_rate,
                qoe=report.qoe_at(spec.qoe_lambda),
                qoe_lambda=spec.qoe_lambda,
                sync_events=report.sync_events,
                trace_path=str(spec.output_dir / "traces" / f"{pair.stem}.jsonl"),
                trace_fingerprint=trace.fingerprint(),
                report=report.to_dict(),
            )
    logger.info(f"Recorded benchmark run {bench_run.run_id} with {len(result.pairs)} result(s)")
    return bench_run
