import json
import math
import re
import tempfile
from dataclasses import replace
from io import StringIO
from pathlib import Path

from django.contrib.auth.models import User
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings
from django.urls import reverse

from apps.dags.exceptions import MalformedTrace, ScenarioInvalid, UnknownPlatform
from apps.scheduling.scenario_files import dump_scenario
from apps.scheduling.scenarios import generate_case_study, generate_minibench
from apps.scheduling.scheduler import DropPolicy, Policy, SchedulerConfig, SyncPolicy
from apps.scheduling.simulator import run
from apps.scheduling.trace import EventKind, EventTrace

from . import cli, conf
from .metrics import (
    Outcome, QoEParams, Rates, compute_report, histogram, instances, job_qoe, jobs, miss_drop_rates,
    node_qoe, qoe_score, response_stats,
)
from .models import BenchmarkRun, PolicyResult
from .reports import comparison_frame, policy_summary, render
from .runner import RunSpec, build_variants, generate_run_id, record_run, resolve_scenario, run_sweep


def two_job_trace():
    """Job 0: a on time, b late. Job 1: a dropped, b cut off by the horizon."""
    trace = EventTrace()
    tracked = {"a": "a", "b": "b"}
    trace.record(0, EventKind.RELEASE, "t", 0, tracked=tracked, sinks=["b"], deadline_us=100)
    trace.record(0, EventKind.DISPATCH, "t", 0, "a")
    trace.record(30, EventKind.COMPLETE, "t", 0, "a", late=False, deadline_us=50)
    trace.record(30, EventKind.DISPATCH, "t", 0, "b")
    trace.record(100, EventKind.RELEASE, "t", 1, tracked=tracked, sinks=["b"], deadline_us=200)
    trace.record(120, EventKind.COMPLETE, "t", 0, "b", late=True, deadline_us=100)
    trace.record(160, EventKind.DROP, "t", 1, "a", reason="deadline", deadline_us=150)
    trace.record(300, EventKind.DROP, "t", 1, "b", reason="horizon", deadline_us=200)
    return trace


def write_json(path, document):
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


def cyclic_dag_document():
    return {
        "task_id": "loop",
        "deadline_ms": 100,
        "nodes": [{"id": "a", "cost_ms": 1}, {"id": "b", "cost_ms": 1}],
        "edges": [["a", "b"], ["b", "a"]],
    }


class QoETests(SimpleTestCase):
    def test_within_slack_scores_one(self):
        params = QoEParams(lam=1.0, time_unit_us=1000)
        self.assertEqual(qoe_score(500, 800, params), 1.0)
        self.assertEqual(qoe_score(800, 800, params), 1.0)

    def test_one_unit_of_overshoot(self):
        params = QoEParams(lam=1.0, time_unit_us=1_000_000)
        self.assertAlmostEqual(qoe_score(3_000_000, 2_000_000, params), 1 / (1 + math.e))

    def test_score_falls_with_overshoot_and_lambda(self):
        low, high = QoEParams(0.1, 1000), QoEParams(10, 1000)
        scores = [qoe_score(exec_us, 1000, low) for exec_us in (1000, 1500, 2000, 4000)]
        self.assertEqual(scores, sorted(scores, reverse=True))
        self.assertLess(qoe_score(2000, 1000, high), qoe_score(2000, 1000, low))

    def test_invalid_parameters(self):
        with self.assertRaises(ValueError):
            QoEParams(lam=-1)
        with self.assertRaises(ValueError):
            QoEParams(time_unit_us=0)
        with self.assertRaises(ValueError):
            qoe_score(-1, 10, QoEParams())


class MetricsTests(SimpleTestCase):
    def test_instance_outcomes(self):
        outcomes = {(i.job, i.node): i.outcome for i in instances(two_job_trace())}
        self.assertEqual(outcomes, {
            (0, "a"): Outcome.ON_TIME,
            (0, "b"): Outcome.LATE,
            (1, "a"): Outcome.DROPPED,
            (1, "b"): Outcome.CENSORED,
        })

    def test_rates_are_disjoint_and_skip_censored(self):
        overall, per_node = miss_drop_rates(two_job_trace())
        self.assertEqual((overall.released, overall.on_time, overall.late, overall.dropped, overall.censored),
                         (3, 1, 1, 1, 1))
        self.assertAlmostEqual(overall.miss_rate, 1 / 3)
        self.assertAlmostEqual(overall.drop_rate, 1 / 3)
        self.assertAlmostEqual(overall.combined_rate, 2 / 3)
        self.assertEqual(sorted(per_node), ["t/a", "t/b"])
        self.assertEqual(per_node["t/b"].censored, 1)
        self.assertEqual(per_node["t/b"].released, 1)

    def test_empty_rates(self):
        self.assertEqual(Rates().miss_rate, 0.0)
        self.assertEqual(Rates().combined_rate, 0.0)

    def test_job_outcomes_follow_the_sinks(self):
        records = jobs(two_job_trace())
        self.assertEqual([r.outcome for r in records], [Outcome.LATE, Outcome.CENSORED])
        self.assertEqual(records[0].response_us, 120)
        self.assertIsNone(records[1].response_us)

    def test_response_stats_count_completed_jobs_only(self):
        stats = response_stats(two_job_trace())
        self.assertEqual(stats.count, 1)
        self.assertEqual(stats.dropped, 0)
        self.assertAlmostEqual(stats.mean_ms, 0.12)
        self.assertAlmostEqual(stats.max_ms, 0.12)

    def test_no_completed_jobs(self):
        trace = EventTrace()
        trace.record(0, EventKind.RELEASE, "t", 0, tracked={"a": "a"}, sinks=["a"], deadline_us=10)
        trace.record(10, EventKind.DROP, "t", 0, "a", reason="deadline", deadline_us=10)
        stats = response_stats(trace)
        self.assertEqual(stats.count, 0)
        self.assertEqual(stats.dropped, 1)
        self.assertIsNone(stats.mean_ms)

    def test_qoe_over_nodes_and_jobs(self):
        trace = two_job_trace()
        params = QoEParams(lam=0, time_unit_us=10)
        # b: 90us of execution against 70us of slack, two units over
        self.assertAlmostEqual(node_qoe(instances(trace), params), (1 + 1 / 3) / 2)
        self.assertAlmostEqual(job_qoe(jobs(trace), params), 1 / 3)
        self.assertIsNone(job_qoe([], params))

    def test_histogram_buckets(self):
        counts = histogram([1.0, 4.9, 5.0, 12.0], 5)
        self.assertEqual(counts, {(0.0, 5.0): 2, (5.0, 10.0): 1, (10.0, 15.0): 1})
        self.assertEqual(histogram(two_job_trace(), 0.1), {(0.1, 0.2): 1})
        with self.assertRaises(ValueError):
            histogram([1.0], 0)

    def test_event_before_release_is_malformed(self):
        trace = EventTrace()
        trace.record(0, EventKind.DISPATCH, "t", 0, "a")
        with self.assertRaises(MalformedTrace):
            instances(trace)

    def test_unresolved_node_is_malformed(self):
        trace = EventTrace()
        trace.record(0, EventKind.RELEASE, "t", 0, tracked={"a": "a"}, sinks=["a"], deadline_us=10)
        with self.assertRaises(MalformedTrace):
            instances(trace)
        with self.assertRaises(MalformedTrace):
            jobs(trace)

    def test_report_from_synthetic_trace(self):
        report = compute_report(two_job_trace(), lambdas=(0,), time_unit_us=10, policy="EDF", seed=3)
        data = report.to_dict()
        self.assertEqual(data["policy"], "EDF")
        self.assertEqual(data["seed"], 3)
        self.assertEqual(data["rates"]["censored"], 1)
        self.assertEqual(data["job_rates"]["released"], 1)
        self.assertAlmostEqual(data["qoe"]["0"], 2 / 3)
        self.assertAlmostEqual(data["qoe_job"]["0"], 1 / 3)
        self.assertEqual(data["sync_events"], 0)
        self.assertEqual(data["busy_ms"], 0.0)
        self.assertEqual(data["events"], 8)

    def test_report_is_derived_from_the_trace_alone(self):
        trace = run(generate_case_study("async-dependent"), SchedulerConfig(policy=Policy.RED))
        reread = EventTrace.from_jsonl(trace.to_jsonl().splitlines())
        self.assertEqual(compute_report(trace).to_dict(), compute_report(reread).to_dict())

    def test_simulated_rates_add_up(self):
        trace = run(generate_case_study("async-dependent"), SchedulerConfig(policy=Policy.EDF))
        overall, _ = miss_drop_rates(trace)
        self.assertEqual(overall.released, overall.on_time + overall.late + overall.dropped)
        self.assertGreater(overall.late + overall.dropped, 0)


class ReportTests(SimpleTestCase):
    def reports(self):
        config = SchedulerConfig(policy=Policy.EDF)
        scenario = generate_case_study("async-independent")
        return [
            compute_report(run(scenario, config), lambdas=(1,), policy="EDF", seed=0),
            compute_report(run(scenario, config.with_policy(Policy.RED)), lambdas=(1,), policy="RED", seed=0),
        ]

    def test_comparison_rows(self):
        frame = comparison_frame(self.reports(), lambdas=(1,))
        self.assertEqual(list(frame["policy"]), ["EDF", "RED"])
        self.assertNotIn("variant", frame.columns)
        self.assertIn("qoe_1", frame.columns)
        self.assertIn("miss_drop_rate", frame.columns)

    def test_render_formats(self):
        frame = comparison_frame(self.reports(), lambdas=(1,))
        self.assertTrue(render(frame, "csv").startswith("policy,seed,jobs,"))
        records = json.loads(render(frame, "json"))
        self.assertEqual([r["policy"] for r in records], ["EDF", "RED"])
        self.assertIn("miss_rate", render(frame, "human"))
        with self.assertRaises(ValueError):
            render(frame, "xml")

    def test_empty_comparison(self):
        self.assertEqual(render(comparison_frame([]), "human"), "(no runs)\n")

    def test_summary_averages_seeds(self):
        reports = self.reports()
        reports[1].policy = "EDF"
        reports[1].seed = 1
        summary = policy_summary(comparison_frame(reports))
        self.assertEqual(list(summary["policy"]), ["EDF"])
        self.assertNotIn("seed", summary.columns)


class CliParsingTests(SimpleTestCase):
    def test_policies(self):
        self.assertEqual(cli.parse_policies("red, edf,RED"), (Policy.RED, Policy.EDF))
        self.assertEqual(cli.parse_policies("red-ida"), (Policy.RED_IDA,))
        with self.assertRaises(CommandError) as ctx:
            cli.parse_policies("fifo")
        self.assertEqual(ctx.exception.returncode, cli.USAGE_ERROR)

    def test_seeds(self):
        self.assertEqual(cli.parse_seeds("0,1,7"), (0, 1, 7))
        for value in ("1,x", "-1", ""):
            with self.assertRaises(CommandError) as ctx:
                cli.parse_seeds(value)
            self.assertEqual(ctx.exception.returncode, cli.USAGE_ERROR)

    def test_numbers(self):
        self.assertEqual(cli.parse_numbers("0.1,1", "--lambdas"), (0.1, 1.0))
        with self.assertRaises(CommandError):
            cli.parse_numbers("a", "--lambdas")
        with self.assertRaises(CommandError):
            cli.parse_numbers("-5", "--gamma")

    def test_sync(self):
        self.assertIsNone(cli.parse_sync(None, None, 100_000))
        self.assertEqual(cli.parse_sync("periodic", 50, 100_000), SyncPolicy.periodic(50_000))
        self.assertEqual(cli.parse_sync("periodic", None, 100_000), SyncPolicy.periodic(100_000))
        self.assertEqual(cli.parse_sync("on_demand", None, 100_000), SyncPolicy.on_demand())
        with self.assertRaises(CommandError):
            cli.parse_sync("sometimes", None, 100_000)
        with self.assertRaises(CommandError):
            cli.parse_sync("periodic", 0, 100_000)

    def test_drop_policy(self):
        self.assertEqual(cli.parse_drop_policy("never"), DropPolicy.NEVER)
        self.assertIsNone(cli.parse_drop_policy(None))
        with self.assertRaises(CommandError):
            cli.parse_drop_policy("sometimes")


class RunnerTests(SimpleTestCase):
    def spec(self, scenario="case:async-independent", **overrides):
        values = dict(scenario=scenario, policies=(Policy.EDF,), seeds=(0,), output_dir="unused")
        values.update(overrides)
        return RunSpec(**values)

    def test_spec_validation(self):
        for overrides in ({"policies": ()}, {"seeds": ()}, {"seeds": (-1,)}, {"formats": ("xml",)},
                          {"gammas_us": (-1,)}, {"deadline_steps": -1}, {"bucket_ms": 0},
                          {"qoe_lambda": 7}):
            with self.subTest(overrides=overrides):
                with self.assertRaises(ValueError):
                    self.spec(**overrides)

    def test_spec_normalizes_policy_names(self):
        spec = self.spec(policies=("RED", "EDF"))
        self.assertEqual(spec.policies, (Policy.RED, Policy.EDF))
        self.assertIsInstance(spec.output_dir, Path)

    def test_deadline_sweep_variants(self):
        variants = build_variants(self.spec("minibench:xavier:tight", deadline_steps=3))
        self.assertEqual([label for label, _ in variants], ["D6500ms", "D6907.5ms", "D7315ms"])
        self.assertEqual(variants[1][1].tasks[0].deadline_us, 6_907_500)

    def test_deadline_sweep_needs_a_minibench(self):
        with self.assertRaises(ValueError):
            build_variants(self.spec(deadline_steps=3))

    def test_gamma_variants(self):
        single = build_variants(self.spec(gammas_us=(50_000,)))
        self.assertEqual([label for label, _ in single], [""])
        self.assertEqual(single[0][1].refine.gamma_us, 50_000)
        several = build_variants(self.spec(gammas_us=(50_000, 100_000)))
        self.assertEqual([label for label, _ in several], ["gamma50ms", "gamma100ms"])
        self.assertEqual([s.refine.gamma_us for _, s in several], [50_000, 100_000])

    @override_settings(RED_BENCH={"GAMMA_MS": 40, "SPLIT_RATIO": 0.5})
    def test_refinement_settings_reach_builtin_scenarios(self):
        for name, steps in (("case:async-dependent", 0), ("minibench:nano:tight", 2)):
            with self.subTest(scenario=name):
                variants = build_variants(self.spec(name, deadline_steps=steps, refine=conf.refine_config()))
                for _, scenario in variants:
                    self.assertEqual(scenario.refine.gamma_us, 40_000)
                    self.assertEqual(scenario.refine.default_split_ratio, 0.5)

    def test_gamma_flag_wins_over_the_setting(self):
        refine = conf.refine_config(gamma_us=40_000)
        [(_, scenario)] = build_variants(self.spec(refine=refine, gammas_us=(70_000,)))
        self.assertEqual(scenario.refine.gamma_us, 70_000)

    def test_scenario_files_keep_their_refinement(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "async.json"
            dump_scenario(generate_case_study("async-dependent"), path)
            [(_, scenario)] = build_variants(self.spec(str(path), refine=conf.refine_config(gamma_us=40_000)))
        self.assertEqual(scenario.refine.gamma_us, 100_000)

    def test_split_ratio_setting_changes_a_refined_run(self):
        base = generate_minibench("nano", "tight", jobs_per_phase=2)
        fingerprints = set()
        for ratio in (0.3, 0.6):
            with self.settings(RED_BENCH={"SPLIT_RATIO": ratio}):
                scenario = replace(base, refine=conf.refine_config())
            fingerprints.add(run(scenario, SchedulerConfig(policy=Policy.RED)).fingerprint())
        self.assertEqual(len(fingerprints), 2)

    def test_resolve_scenario(self):
        self.assertEqual(resolve_scenario("case:async-dependent"), generate_case_study("async-dependent"))
        with self.assertRaises(UnknownPlatform):
            resolve_scenario("minibench:pi:tight")
        with self.assertRaises(UnknownPlatform):
            resolve_scenario("/nowhere/scenario.json")
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(Path(tmp) / "loop.json", cyclic_dag_document())
            with self.assertRaises(ScenarioInvalid):
                resolve_scenario(str(path))

    def test_sweep_covers_every_pair(self):
        result = run_sweep(self.spec(policies=(Policy.EDF, Policy.RED), seeds=(0, 1)))
        self.assertEqual([(p.policy, p.seed) for p in result.pairs],
                         [("EDF", 0), ("EDF", 1), ("RED", 0), ("RED", 1)])
        self.assertEqual(result.pairs[2].stem, "RED_seed0")
        self.assertEqual(len(result.comparison()), 4)

    def test_run_id_format(self):
        self.assertRegex(generate_run_id(), r"^RB-\d{8}-[0-9A-F]{8}$")


class BenchRunCommandTests(SimpleTestCase):
    def bench_run(self, output_dir, **options):
        out = StringIO()
        values = dict(scenario="case:async-independent", policies="EDF,RED", format="csv",
                      output_dir=str(output_dir), stdout=out, stderr=StringIO())
        values.update(options)
        call_command("bench_run", **values)
        return out.getvalue()

    def test_writes_traces_reports_and_comparison(self):
        with tempfile.TemporaryDirectory() as tmp:
            output = self.bench_run(tmp)
            root = Path(tmp)
            for policy in ("EDF", "RED"):
                self.assertTrue((root / "traces" / f"{policy}_seed0.jsonl").is_file())
                self.assertTrue((root / "traces" / f"{policy}_seed0.csv").is_file())
                report = json.loads((root / "reports" / f"{policy}_seed0.json").read_text())
                self.assertEqual(report["policy"], policy)
            self.assertTrue((root / "comparison.csv").is_file())
            self.assertFalse((root / "comparison.json").exists())
        self.assertIn("Wrote 9 file(s)", output)

    def test_writes_histograms_and_policy_summary(self):
        with tempfile.TemporaryDirectory() as tmp:
            self.bench_run(tmp, seeds="0,1", bucket_ms=20.0)
            histograms = (Path(tmp) / "histograms.csv").read_text().splitlines()
            summary = (Path(tmp) / "summary.csv").read_text().splitlines()
        self.assertEqual(histograms[0], "series,bucket_lo_ms,bucket_hi_ms,jobs")
        series = {line.split(",")[0] for line in histograms[1:]}
        self.assertEqual(series, {"EDF_seed0", "EDF_seed1", "RED_seed0", "RED_seed1"})
        for line in histograms[1:]:
            lo, hi = (float(value) for value in line.split(",")[1:3])
            self.assertAlmostEqual(hi - lo, 20.0)
            self.assertEqual(lo % 20.0, 0.0)
        self.assertTrue(summary[0].startswith("policy,"))
        self.assertEqual([line.split(",")[0] for line in summary[1:]], ["EDF", "RED"])

    def test_non_positive_bucket_is_a_usage_error(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError) as ctx:
                self.bench_run(tmp, bucket_ms=0.0)
        self.assertEqual(ctx.exception.returncode, cli.USAGE_ERROR)

    def test_stored_qoe_lambda_must_be_in_the_grid(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError) as ctx:
                self.bench_run(tmp, lambdas="0.1,10", qoe_lambda=1.0)
        self.assertEqual(ctx.exception.returncode, cli.USAGE_ERROR)

    def test_output_is_reproducible(self):
        with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
            self.bench_run(first, seeds="0,3")
            self.bench_run(second, seeds="0,3")
            for name in ("comparison.csv", "traces/RED_seed3.jsonl", "reports/EDF_seed0.json"):
                self.assertEqual((Path(first) / name).read_bytes(), (Path(second) / name).read_bytes())

    def test_unknown_builtin_is_a_usage_error(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError) as ctx:
                self.bench_run(tmp, scenario="minibench:pi:tight")
        self.assertEqual(ctx.exception.returncode, cli.USAGE_ERROR)

    def test_unknown_policy_is_a_usage_error(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError) as ctx:
                self.bench_run(tmp, policies="FIFO")
        self.assertEqual(ctx.exception.returncode, cli.USAGE_ERROR)

    def test_invalid_scenario_file_is_a_validation_failure(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(Path(tmp) / "loop.json", cyclic_dag_document())
            with self.assertRaises(CommandError) as ctx:
                self.bench_run(tmp, scenario=str(path))
        self.assertEqual(ctx.exception.returncode, cli.VALIDATION_FAILED)


class BenchValidateCommandTests(SimpleTestCase):
    def validate(self, path):
        out = StringIO()
        call_command("bench_validate", str(path), stdout=out, stderr=StringIO())
        return out.getvalue()

    def test_clean_scenario_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "async.json"
            dump_scenario(generate_case_study("async-dependent"), path)
            output = self.validate(path)
        self.assertIn("is valid: 2 task(s), 2 node(s)", output)

    def test_cyclic_dag_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(Path(tmp) / "loop.json", cyclic_dag_document())
            with self.assertRaises(CommandError) as ctx:
                self.validate(path)
        self.assertEqual(ctx.exception.returncode, cli.VALIDATION_FAILED)
        self.assertIn("[cycle]", str(ctx.exception))

    def test_missing_required_field(self):
        document = cyclic_dag_document()
        del document["deadline_ms"]
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(Path(tmp) / "dag.json", document)
            with self.assertRaises(CommandError) as ctx:
                self.validate(path)
        self.assertEqual(ctx.exception.returncode, cli.VALIDATION_FAILED)
        self.assertIn("deadline_ms", str(ctx.exception))

    def test_unparsable_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "broken.json"
            path.write_text("{not json", encoding="utf-8")
            with self.assertRaises(CommandError) as ctx:
                self.validate(path)
        self.assertEqual(ctx.exception.returncode, cli.VALIDATION_FAILED)

    def test_missing_file_is_a_usage_error(self):
        with self.assertRaises(CommandError) as ctx:
            self.validate("/nowhere/scenario.json")
        self.assertEqual(ctx.exception.returncode, cli.USAGE_ERROR)


class BenchCaseStudyCommandTests(SimpleTestCase):
    def test_unknown_case_study(self):
        with self.assertRaises(CommandError) as ctx:
            call_command("bench_case_study", "rush-hour", stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, cli.USAGE_ERROR)

    def test_async_pair_histograms(self):
        out = StringIO()
        with tempfile.TemporaryDirectory() as tmp:
            call_command("bench_case_study", "async-dependent", output_dir=tmp, format="csv", stdout=out)
            root = Path(tmp) / "case_studies"
            self.assertTrue((root / "async_histograms.csv").is_file())
            self.assertTrue((root / "async-independent.json").is_file())
            self.assertTrue((root / "async-dependent_EDF_seed0.jsonl").is_file())
        output = out.getvalue()
        self.assertIn("async-dependent: task B", output)
        self.assertIn("async-independent: task B", output)
        self.assertIn("series,bucket_lo_ms,bucket_hi_ms,jobs", output)

    @override_settings(RED_BENCH={"GAMMA_MS": 40, "SPLIT_RATIO": 0.5})
    def test_case_study_runs_with_the_refinement_settings(self):
        with tempfile.TemporaryDirectory() as tmp:
            call_command("bench_case_study", "dynamic-workload", output_dir=tmp, format="csv",
                         policy="RED", stdout=StringIO())
            document = json.loads((Path(tmp) / "case_studies" / "dynamic-workload.json").read_text())
        self.assertEqual(document["refine"]["gamma_ms"], 40)
        self.assertEqual(document["refine"]["default_split_ratio"], 0.5)


class RecordedRunTests(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        spec = RunSpec(scenario="case:async-independent", policies=(Policy.EDF,), seeds=(0, 1),
                       output_dir=self.tmp.name)
        self.bench_run = record_run(run_sweep(spec), notes="nightly")
        self.user = User.objects.create_user(username="bench", password="bench-pass-123")

    def test_record_run_stores_one_result_per_pair(self):
        self.assertEqual(self.bench_run.status, "completed")
        self.assertEqual(self.bench_run.policy_list, ["EDF"])
        results = list(self.bench_run.results.all())
        self.assertEqual([r.seed for r in results], [0, 1])
        for result in results:
            self.assertEqual(len(result.trace_fingerprint), 64)
            self.assertAlmostEqual(result.combined_rate, result.miss_rate + result.drop_rate)
            self.assertEqual(result.report["policy"], "EDF")
            self.assertTrue(result.trace_path.endswith(f"traces/EDF_seed{result.seed}.jsonl"))
            self.assertEqual(result.qoe_lambda, 1.0)
            self.assertEqual(result.qoe, result.report["qoe"]["1"])

    def test_detail_requires_login(self):
        response = self.client.get(reverse("benchmarks:run_detail", args=[self.bench_run.run_id]))
        self.assertEqual(response.status_code, 302)
        self.assertTrue(response.url.startswith("/admin/login/"))

    def test_detail(self):
        self.client.force_login(self.user)
        response = self.client.get(reverse("benchmarks:run_detail", args=[self.bench_run.run_id]))
        self.assertEqual(response.status_code, 200)
        data = response.json()
        self.assertEqual(data["run_id"], self.bench_run.run_id)
        self.assertEqual(data["policies"], ["EDF"])
        self.assertEqual(data["seeds"], [0, 1])
        self.assertEqual(data["notes"], "nightly")
        self.assertEqual(len(data["results"]), 2)
        self.assertIn("rates", data["results"][0]["report"])

    def test_unknown_run(self):
        self.client.force_login(self.user)
        response = self.client.get(reverse("benchmarks:run_detail", args=["RB-00000000-DEADBEEF"]))
        self.assertEqual(response.status_code, 404)
        self.assertIn("error", response.json())

    def test_detail_rejects_post(self):
        self.client.force_login(self.user)
        response = self.client.post(reverse("benchmarks:run_detail", args=[self.bench_run.run_id]))
        self.assertEqual(response.status_code, 405)

    def test_list_pagination_and_filters(self):
        for index in range(2):
            BenchmarkRun.objects.create(run_id=f"RB-20260101-0000000{index}", scenario="minibench:orin:tight",
                                        policies="RED", seeds="0", output_dir="out", status="failed")
        self.client.force_login(self.user)

        response = self.client.get(reverse("benchmarks:run_list"), {"per_page": 2})
        data = response.json()
        self.assertEqual(data["count"], 3)
        self.assertEqual(data["total_pages"], 2)
        self.assertTrue(data["has_next"])
        self.assertFalse(data["has_previous"])
        self.assertEqual(len(data["results"]), 2)

        response = self.client.get(reverse("benchmarks:run_list"), {"status": "completed"})
        data = response.json()
        self.assertEqual([row["run_id"] for row in data["results"]], [self.bench_run.run_id])

        response = self.client.get(reverse("benchmarks:run_list"), {"scenario": "minibench:orin:tight"})
        self.assertEqual(response.json()["count"], 2)

    def test_root_redirects_to_the_run_list(self):
        response = self.client.get("/")
        self.assertRedirects(response, reverse("benchmarks:run_list"), fetch_redirect_response=False)


class PolicyResultModelTests(TestCase):
    def test_string_forms(self):
        bench_run = BenchmarkRun.objects.create(run_id="RB-20260101-ABCDEF01", scenario="case:async-dependent",
                                                policies="EDF,RED", seeds="0", output_dir="out")
        result = PolicyResult.objects.create(run=bench_run, policy="RED", variant="D6500ms",
                                             miss_rate=0.25, drop_rate=0.5)
        self.assertEqual(str(bench_run), "RB-20260101-ABCDEF01 - case:async-dependent")
        self.assertEqual(str(result), "RB-20260101-ABCDEF01 - D6500ms RED seed 0")
        self.assertEqual(result.combined_rate, 0.75)
        self.assertEqual(bench_run.status, "pending")
        self.assertTrue(re.match(r"RB-\d{8}-", bench_run.run_id))
