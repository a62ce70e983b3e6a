import random
import tempfile
import time
from pathlib import Path
from unittest import skipUnless

from decouple import config
from django.test import SimpleTestCase

from apps.benchmarks.metrics import Outcome, compute_report, instances, jobs
from apps.benchmarks.reports import phase_table
from apps.dags.exceptions import EmptyReadyQueue, IllegalState, ScenarioInvalid, UnknownCaseStudy, UnknownPlatform
from apps.dags.graph import DagMutation, DagTask, MutationKind, NodeSpec, ms_to_us, random_dag
from apps.dags.refinement import RefineConfig

from .checks import accelerator_busy_us, check_compute_saving, replay_violations
from .handlers import Handler, HandlerState, is_legal
from .scenario_files import check_document, dump_scenario, load_scenario, scenario_to_dict
from .scenarios import (
    PLATFORMS, TIGHTNESS, builtin, builtin_names, deadline_sweep, generate_case_study, generate_minibench,
)
from .scheduler import (
    DropDecision, DropPolicy, JobKey, Policy, ReadyEntry, ReadyQueue, Scheduler, SchedulerConfig,
    SyncPolicy, enforce_drop_policy, next_task_to_schedule, sync_events,
)
from .simulator import run
from .trace import EventKind, EventTrace, TraceEvent
from .workload import Constant, ExecutionModel, Fault, FaultKind, Link, Scenario, validate_scenario


def ms(value):
    return ms_to_us(value)


def free_config(policy=Policy.EDF, **overrides):
    """No decision, blocking or synchronization cost, so timings are exact."""
    return SchedulerConfig(policy=policy, sync_cost_us=0, decision_cost_us=0, blocking_us=0, **overrides)


def worked_example():
    nodes = (NodeSpec("A", ms(20)), NodeSpec("B", ms(20)), NodeSpec("C", ms(40)))
    return DagTask("w", nodes, frozenset({("A", "C"), ("B", "C")}), deadline_us=ms(120))


def completions(trace):
    return [(event.node, event.time_us) for event in trace.of_kind(EventKind.COMPLETE)]


def drop_reasons(trace):
    return {event.node: event.payload["reason"] for event in trace.of_kind(EventKind.DROP)}


class ReadyQueueTests(SimpleTestCase):
    def test_earliest_deadline_then_release_then_node(self):
        entries = [
            ReadyEntry("c", JobKey("u", 0), ms(100), 0),
            ReadyEntry("a", JobKey("t", 1), ms(100), ms(10)),
            ReadyEntry("b", JobKey("t", 0), ms(100), 0),
            ReadyEntry("z", JobKey("v", 0), ms(200), 0),
        ]
        self.assertEqual(next_task_to_schedule(entries).node, "b")
        self.assertEqual(next_task_to_schedule(entries[:2]).node, "c")

    def test_empty_selection(self):
        with self.assertRaises(EmptyReadyQueue):
            next_task_to_schedule([])

    def test_deadline_instant_is_still_feasible(self):
        entry = ReadyEntry("n", JobKey("t", 0), 100, 0)
        self.assertIs(enforce_drop_policy(entry, 100), DropDecision.KEEP)
        self.assertIs(enforce_drop_policy(entry, 101), DropDecision.DROP)
        self.assertIs(enforce_drop_policy(entry, 101, DropPolicy.DROP_JOB), DropDecision.DROP)
        self.assertIs(enforce_drop_policy(entry, 10_000, DropPolicy.NEVER), DropDecision.KEEP)

    def test_queue_rekeys_and_removes_lazily(self):
        queue = ReadyQueue()
        job = JobKey("t", 0)
        queue.push(ReadyEntry("a", job, 300, 0))
        queue.push(ReadyEntry("b", job, 200, 0))
        queue.push(ReadyEntry("c", job, 100, 0))
        queue.push(ReadyEntry("a", job, 50, 0))
        queue.remove(job, "c")
        self.assertEqual(len(queue), 2)
        self.assertIn((job, "b"), queue)
        self.assertNotIn((job, "c"), queue)
        self.assertEqual([e.node for e in queue], ["a", "b"])
        self.assertEqual(queue.pop(), ReadyEntry("a", job, 50, 0))
        self.assertEqual(queue.pop().node, "b")
        self.assertIsNone(queue.peek())
        with self.assertRaises(EmptyReadyQueue):
            queue.pop()


class HandlerTests(SimpleTestCase):
    def test_blocked_node_runs_again(self):
        handler = Handler("n")
        for state in (HandlerState.READY, HandlerState.RUNNING, HandlerState.BLOCKED,
                      HandlerState.READY, HandlerState.RUNNING, HandlerState.COMPLETED):
            handler.transition(state)
        self.assertTrue(handler.terminal)
        self.assertEqual(handler.history[0], HandlerState.CREATED)
        self.assertEqual(len(handler.history), 6)

    def test_illegal_transitions(self):
        handler = Handler("n")
        with self.assertRaises(IllegalState):
            handler.transition(HandlerState.RUNNING)
        self.assertFalse(is_legal("completed", "ready"))
        self.assertFalse(is_legal("blocked", "running"))
        self.assertTrue(is_legal("ready", "dropped"))


class SchedulerConfigTests(SimpleTestCase):
    def test_default_sync_per_policy(self):
        self.assertEqual(SchedulerConfig(policy=Policy.RED).effective_sync, SyncPolicy.on_demand())
        for policy in (Policy.EDF, Policy.RED_FG, Policy.RED_IDA):
            self.assertEqual(SchedulerConfig(policy=policy).effective_sync, SyncPolicy.periodic(100_000))

    def test_dispatch_overhead(self):
        cfg = SchedulerConfig(policy=Policy.EDF, decision_cost_us=500, blocking_us=300)
        self.assertEqual(cfg.dispatch_overhead_us, 800)
        self.assertEqual(cfg.with_policy("RED").dispatch_overhead_us, 500)

    def test_rejects_bad_values(self):
        with self.assertRaises(ValueError):
            SchedulerConfig(sync_cost_us=-1)
        with self.assertRaises(ValueError):
            SyncPolicy.periodic(0)
        with self.assertRaises(ValueError):
            SchedulerConfig(policy="FIFO")

    def test_policy_capabilities(self):
        self.assertEqual([p.value for p in Policy if p.refines], ["RED-FG", "RED-IDA", "RED"])
        self.assertEqual([p.value for p in Policy if p.reassigns], ["RED-IDA", "RED"])


class JobSetupTests(SimpleTestCase):
    samples = {"A": ms(20), "B": ms(20), "C": ms(40)}

    def test_releases_of_one_dag_share_its_prepared_graph(self):
        scheduler = Scheduler(free_config(Policy.RED))
        first = scheduler.build_job(worked_example(), 0, 0, self.samples)
        second = scheduler.build_job(worked_example(), 1, ms(150), self.samples)
        self.assertIs(first.graph, second.graph)
        self.assertEqual(second.deadlines, {"A": ms(190), "B": ms(190), "C": ms(270)})
        self.assertEqual(second.deadline_us, ms(270))
        second.pending["C"] -= 1
        second.deadlines["C"] = ms(300)
        self.assertEqual(first.pending["C"], 2)
        self.assertEqual(first.deadlines["C"], ms(120))

    def test_changed_dag_is_prepared_again(self):
        scheduler = Scheduler(free_config(Policy.EDF))
        dag = worked_example()
        grown = DagTask(dag.task_id, (*dag.nodes, NodeSpec("D", ms(10))), dag.edges | {("C", "D")},
                        dag.deadline_us)
        before = scheduler.build_job(dag, 0, 0, self.samples)
        after = scheduler.build_job(grown, 1, ms(150), {**self.samples, "D": ms(10)})
        self.assertIsNot(before.graph, after.graph)
        self.assertEqual(after.heights, {"A": 0, "B": 0, "C": 1, "D": 2})
        self.assertEqual(after.finals, {"A": ("A",), "B": ("B",), "C": ("C",), "D": ("D",)})


class SyncEventTests(SimpleTestCase):
    def test_periodic_ticks_inside_the_job_lifetime(self):
        trace = [
            TraceEvent(0, EventKind.RELEASE, "t", 0, None, {"heights": {"a": 0}}),
            TraceEvent(95_000, EventKind.COMPLETE, "t", 0, "a", {"level": 0}),
        ]
        ticks = sync_events(SyncPolicy.periodic(10_000), trace, now_us=200_000)
        self.assertEqual([tick.time_us for tick in ticks], list(range(0, 100_000, 10_000)))

    def test_unfinished_job_ticks_until_now(self):
        trace = [TraceEvent(5_000, EventKind.RELEASE, "t", 0, None, {"heights": {"a": 0}})]
        self.assertEqual(len(sync_events(SyncPolicy.periodic(10_000), trace, now_us=50_000)), 5)

    def test_on_demand_follows_levels_and_blocking(self):
        trace = [
            TraceEvent(0, EventKind.RELEASE, "t", 0, None, {"heights": {"a": 0, "b": 0, "c": 1}}),
            TraceEvent(10, EventKind.COMPLETE, "t", 0, "a", {"level": 0}),
            TraceEvent(20, EventKind.COMPLETE, "t", 0, "b", {"level": 0}),
            TraceEvent(30, EventKind.STATE, "t", 0, "c", {"from": "running", "to": "blocked"}),
            TraceEvent(50, EventKind.COMPLETE, "t", 0, "c", {"level": 1}),
        ]
        found = sync_events(SyncPolicy.on_demand(), trace, now_us=100)
        self.assertEqual([(s.time_us, s.reason, s.level) for s in found],
                         [(20, "level", 0), (30, "blocked", None), (50, "level", 1)])


class SimulationTests(SimpleTestCase):
    def scenario(self, *tasks, horizon_ms=300, **extra):
        return Scenario(name="test", tasks=tasks, horizon_us=ms(horizon_ms), **extra)

    def test_worked_example_finishes_at_eighty_ms(self):
        for policy in Policy:
            with self.subTest(policy=policy.value):
                trace = run(self.scenario(worked_example()), free_config(policy))
                self.assertEqual(completions(trace), [("A", ms(20)), ("B", ms(40)), ("C", ms(80))])
                self.assertEqual(trace.of_kind(EventKind.MISS), [])
                self.assertEqual(replay_violations(trace, ms(300)), [])

    def test_release_carries_intermediate_deadlines(self):
        trace = run(self.scenario(worked_example()), free_config())
        release = trace.of_kind(EventKind.RELEASE)[0]
        self.assertEqual(dict(release.payload["deadlines"]), {"A": ms(40), "B": ms(40), "C": ms(120)})
        self.assertEqual(release.payload["deadline_us"], ms(120))

    def test_blocked_node_reruns_after_waking(self):
        fault = Fault("w", "A", 0, FaultKind.BLOCK, block_us=ms(5))
        trace = run(self.scenario(worked_example(), faults=(fault,)), free_config())
        self.assertEqual(completions(trace), [("B", ms(40)), ("A", ms(60)), ("C", ms(100))])
        self.assertEqual([e.node for e in trace.of_kind(EventKind.MISS)], ["A"])
        self.assertEqual(replay_violations(trace, ms(300)), [])

    def test_out_of_memory_drops_the_node(self):
        fault = Fault("w", "B", 0, FaultKind.OOM)
        trace = run(self.scenario(worked_example(), faults=(fault,)), free_config())
        self.assertEqual(drop_reasons(trace), {"B": "oom"})
        self.assertEqual(completions(trace), [("A", ms(20)), ("C", ms(80))])

    def overloaded(self, drop_policy):
        hog = DagTask("x", (NodeSpec("n", ms(30)),), deadline_us=ms(8))
        chain = DagTask("y", (NodeSpec("p", ms(5)), NodeSpec("q", ms(5))), frozenset({("p", "q")}),
                        deadline_us=ms(20))
        return run(self.scenario(hog, chain, horizon_ms=100), free_config(drop_policy=drop_policy))

    def test_drop_node_drops_each_expired_entry(self):
        trace = self.overloaded(DropPolicy.DROP_NODE)
        self.assertEqual(drop_reasons(trace), {"p": "deadline", "q": "deadline"})
        self.assertEqual(replay_violations(trace), [])

    def test_drop_job_cancels_the_rest_of_the_job(self):
        trace = self.overloaded(DropPolicy.DROP_JOB)
        self.assertEqual(drop_reasons(trace), {"p": "deadline", "q": "job_cancelled"})
        self.assertEqual(replay_violations(trace), [])

    def test_never_drop_runs_late(self):
        trace = self.overloaded(DropPolicy.NEVER)
        self.assertEqual(drop_reasons(trace), {})
        self.assertEqual(completions(trace), [("n", ms(30)), ("p", ms(35)), ("q", ms(40))])
        self.assertEqual([e.node for e in trace.of_kind(EventKind.MISS)], ["n", "p", "q"])

    def test_encoders_of_concurrent_jobs_run_once(self):
        tasks = [DagTask(task_id, (NodeSpec("X", ms(10), share_group="g"),), deadline_us=ms(100))
                 for task_id in ("a", "b")]
        trace = run(self.scenario(*tasks), free_config(Policy.RED))
        leaders = [e for e in trace.of_kind(EventKind.DISPATCH) if e.payload["role"] == "leader"]
        self.assertEqual(leaders[0].payload["mode"], "merge")
        self.assertEqual(list(leaders[0].payload["members"]), ["a#0/X#enc", "b#0/X#enc"])
        self.assertEqual(completions(trace), [("X#enc", ms(6)), ("X#enc", ms(6)),
                                              ("X#dec", ms(10)), ("X#dec", ms(14))])
        self.assertEqual(replay_violations(trace), [])

    def test_edf_never_merges(self):
        tasks = [DagTask(task_id, (NodeSpec("X", ms(10), share_group="g"),), deadline_us=ms(100))
                 for task_id in ("a", "b")]
        trace = run(self.scenario(*tasks), free_config(Policy.EDF))
        self.assertEqual(completions(trace), [("X", ms(10)), ("X", ms(20))])

    def test_sync_cost_occupies_the_accelerator(self):
        cfg = SchedulerConfig(policy=Policy.RED, sync_cost_us=ms(2), decision_cost_us=0)
        trace = run(self.scenario(worked_example()), cfg)
        syncs = trace.of_kind(EventKind.SYNC)
        self.assertEqual([(s.time_us, s.payload["reason"]) for s in syncs], [(ms(40), "level"), (ms(82), "level")])
        self.assertEqual(completions(trace)[-1], ("C", ms(82)))
        self.assertEqual(accelerator_busy_us(trace), ms(84))

    def test_tick_on_a_release_instant_syncs_the_new_job(self):
        dag = DagTask("p", (NodeSpec("n", ms(30)),), deadline_us=ms(50), period_us=ms(100), max_jobs=3)
        cfg = SchedulerConfig(policy=Policy.EDF, sync_interval_us=ms(100), sync_cost_us=ms(2),
                              decision_cost_us=0)
        trace = run(self.scenario(dag), cfg)
        syncs = [event.time_us for event in trace.of_kind(EventKind.SYNC)]
        self.assertEqual(syncs, [0, ms(100), ms(200)])
        expected = sync_events(SyncPolicy.periodic(ms(100)), trace, ms(300))
        self.assertEqual([tick.time_us for tick in expected], syncs)
        self.assertEqual(completions(trace), [("n", ms(32)), ("n", ms(132)), ("n", ms(232))])

    def chain(self, *costs_ms, deadline_ms=120):
        ids = "abcdefgh"[:len(costs_ms)]
        nodes = tuple(NodeSpec(node_id, ms(cost)) for node_id, cost in zip(ids, costs_ms))
        return DagTask("k", nodes, frozenset(zip(ids, ids[1:])), deadline_us=ms(deadline_ms))

    def test_early_completion_pulls_successor_deadlines_in(self):
        trace = run(self.scenario(self.chain(10, 20, 30)), free_config(Policy.RED_IDA))
        reassigns = [(event.time_us, dict(event.payload["deadlines"]))
                     for event in trace.of_kind(EventKind.REASSIGN)]
        self.assertEqual(reassigns, [(ms(10), {"b": ms(54)})])
        dispatched = {e.node: e.payload["deadline_us"] for e in trace.of_kind(EventKind.DISPATCH)}
        self.assertEqual(dispatched, {"a": ms(20), "b": ms(54), "c": ms(120)})
        self.assertEqual(trace.of_kind(EventKind.MISS), [])

    def test_fixed_deadline_policies_never_reassign(self):
        for policy in (Policy.EDF, Policy.RED_FG):
            with self.subTest(policy=policy.value):
                trace = run(self.scenario(self.chain(10, 20, 30)), free_config(policy))
                self.assertEqual(trace.of_kind(EventKind.REASSIGN), [])

    def test_completions_on_their_deadlines_move_nothing(self):
        trace = run(self.scenario(self.chain(20, 40, 60)), free_config(Policy.RED))
        self.assertEqual(trace.of_kind(EventKind.REASSIGN), [])
        self.assertEqual(completions(trace), [("a", ms(20)), ("b", ms(60)), ("c", ms(120))])
        self.assertEqual(trace.of_kind(EventKind.MISS), [])

    def test_merged_encoder_costs_one_encoder_plus_the_surcharge(self):
        tasks = [DagTask(task_id, (NodeSpec("X", ms(10), share_group="g"),), deadline_us=ms(100))
                 for task_id in ("a", "b", "c")]
        scenario = self.scenario(*tasks, refine=RefineConfig(merge_surcharge_us=ms(1)))
        trace = run(scenario, free_config(Policy.RED))
        leader = next(e for e in trace.of_kind(EventKind.DISPATCH) if e.payload.get("mode") == "merge")
        self.assertEqual(list(leader.payload["member_costs"]), [ms(6)] * 3)
        self.assertEqual(leader.payload["cost_us"], ms(8))
        self.assertEqual(check_compute_saving(trace), [])
        inflated = TraceEvent(0, EventKind.DISPATCH, "a", 0, "X#enc",
                              {"mode": "merge", "member_costs": [ms(6), ms(6)], "cost_us": ms(12)})
        self.assertEqual(len(check_compute_saving([inflated])), 1)

    def test_same_seed_same_trace(self):
        scenario = generate_minibench("xavier", "tight", seed=3)
        first = run(scenario, SchedulerConfig(policy=Policy.RED))
        second = run(scenario, SchedulerConfig(policy=Policy.RED))
        self.assertEqual(first.fingerprint(), second.fingerprint())
        other = run(generate_minibench("xavier", "tight", seed=4), SchedulerConfig(policy=Policy.RED))
        self.assertNotEqual(first.fingerprint(), other.fingerprint())

    def test_jsonl_export_reads_back(self):
        trace = run(generate_case_study("async-dependent"), SchedulerConfig(policy=Policy.EDF))
        again = EventTrace.from_jsonl(trace.to_jsonl().splitlines())
        self.assertEqual(again.fingerprint(), trace.fingerprint())
        self.assertEqual(len(trace.node_summary()), len(instances(trace)))

    def test_minibench_traces_replay_cleanly(self):
        scenario = generate_minibench("xavier", "tight")
        for policy in Policy:
            with self.subTest(policy=policy.value):
                trace = run(scenario, SchedulerConfig(policy=policy))
                self.assertEqual(replay_violations(trace, scenario.horizon_us), [])

    def test_invalid_scenario_is_refused(self):
        dag = DagTask("t", (NodeSpec("a", 0),), deadline_us=ms(10))
        with self.assertRaises(ScenarioInvalid):
            run(self.scenario(dag), SchedulerConfig())
        tiny = self.chain(10, 20, 30, deadline_ms=0.002)
        with self.assertRaises(ScenarioInvalid):
            run(self.scenario(tiny), SchedulerConfig())

    def test_empty_scenario_has_empty_trace(self):
        self.assertEqual(len(run(self.scenario(), SchedulerConfig())), 0)


class MinibenchTests(SimpleTestCase):
    def reports(self, name, policies):
        scenario = builtin(name)
        return {policy: compute_report(run(scenario, SchedulerConfig(policy=policy)))
                for policy in policies}

    def test_red_beats_edf_on_every_platform(self):
        for name in PLATFORMS:
            for tightness in TIGHTNESS:
                with self.subTest(platform=name, tightness=tightness):
                    found = self.reports(f"minibench:{name}:{tightness}", (Policy.EDF, Policy.RED))
                    edf, red = found[Policy.EDF], found[Policy.RED]
                    self.assertEqual(red.response.count, 20)
                    self.assertLess(red.response.mean_ms, edf.response.mean_ms)
                    self.assertLessEqual(red.miss_rate, edf.miss_rate)
                    self.assertLess(red.sync_events, edf.sync_events)

    def cells(self):
        for name in PLATFORMS:
            for tightness in TIGHTNESS:
                yield f"minibench:{name}:{tightness}"

    def test_policy_ordering_in_every_cell(self):
        for cell in self.cells():
            with self.subTest(cell=cell):
                found = self.reports(cell, (Policy.EDF, Policy.RED_IDA, Policy.RED))
                means = [found[p].response.mean_ms for p in (Policy.RED, Policy.RED_IDA, Policy.EDF)]
                self.assertEqual(means, sorted(means))
                self.assertLessEqual(found[Policy.RED].miss_rate, found[Policy.EDF].miss_rate)
                self.assertLess(found[Policy.RED].sync_events, found[Policy.RED_IDA].sync_events)

    def test_only_tight_deadlines_make_edf_miss(self):
        for name in PLATFORMS:
            with self.subTest(platform=name):
                tight = self.reports(f"minibench:{name}:tight", (Policy.EDF, Policy.RED))
                loose = self.reports(f"minibench:{name}:loose", (Policy.EDF,))
                self.assertGreater(tight[Policy.EDF].miss_rate, 0)
                self.assertLess(tight[Policy.EDF].qoe["1"], 1.0)
                self.assertEqual(tight[Policy.RED].miss_rate, 0)
                self.assertEqual(loose[Policy.EDF].miss_rate, 0)
                self.assertEqual(loose[Policy.EDF].qoe["1"], 1.0)

    def test_obstacle_joins_halfway(self):
        trace = run(builtin("minibench:orin:loose"), SchedulerConfig(policy=Policy.EDF))
        shapes = [sorted(e.payload["heights"]) for e in trace.of_kind(EventKind.RELEASE)]
        self.assertEqual(shapes[:10], [["C", "L", "S"]] * 10)
        self.assertEqual(shapes[10:], [["C", "L", "O", "S"]] * 10)

    def test_deadline_sweep_spans_tight_to_loose(self):
        self.assertEqual(deadline_sweep("xavier", 6), [6500.0, 6663.0, 6826.0, 6989.0, 7152.0, 7315.0])
        self.assertEqual(deadline_sweep("xavier", 1), [6500.0])

    def test_builtin_lookup(self):
        self.assertEqual(len(builtin_names()), 11)
        self.assertEqual(builtin("minibench:nano:loose").tasks[0].deadline_us, ms(11325))
        with self.assertRaises(UnknownPlatform):
            builtin("minibench:pi:tight")
        with self.assertRaises(UnknownCaseStudy):
            generate_case_study("rush-hour")


class CaseStudyTests(SimpleTestCase):
    def test_obstacle_window_concentrates_failures(self):
        scenario = generate_case_study("dynamic-workload")
        trace = run(scenario, SchedulerConfig(policy=Policy.EDF))
        table = phase_table(instances(trace), (ms(3000), ms(6000)), task="drive").set_index("phase")
        rates = table["miss_drop_rate"]
        self.assertEqual(list(table.index), ["[0s, 3s)", "[3s, 6s)", "[6s, end)"])
        self.assertEqual(rates["[0s, 3s)"], 0.0)
        self.assertGreater(rates["[3s, 6s)"], 0.1)
        self.assertGreater(rates["[3s, 6s)"], rates["[6s, end)"])
        self.assertEqual(replay_violations(trace, scenario.horizon_us), [])

    def test_obstacle_window_fails_five_times_as_often(self):
        trace = run(generate_case_study("dynamic-workload"), SchedulerConfig(policy=Policy.EDF))
        table = phase_table(instances(trace), (ms(3000), ms(6000)), task="drive").set_index("phase")
        table["failed"] = table["late"] + table["dropped"]
        inside = table.loc["[3s, 6s)"]
        outside = table.drop(index="[3s, 6s)")
        inside_rate = inside["failed"] / inside["released"]
        outside_rate = outside["failed"].sum() / outside["released"].sum()
        self.assertGreater(inside_rate, 0)
        self.assertGreaterEqual(inside_rate, 5 * outside_rate)

    def test_mutations_reshape_later_jobs_only(self):
        trace = run(generate_case_study("dynamic-workload"), SchedulerConfig(policy=Policy.EDF))
        for release in trace.of_kind(EventKind.RELEASE):
            with self.subTest(at=release.time_us):
                inside = ms(3000) <= release.time_us < ms(6000)
                self.assertEqual("C" in release.payload["heights"], inside)

    def b_jobs(self, which):
        trace = run(generate_case_study(which), SchedulerConfig(policy=Policy.EDF))
        return [r for r in jobs(trace) if r.task == "B" and r.outcome != Outcome.CENSORED]

    def test_dependent_task_misses_waiting_for_fresh_input(self):
        records = self.b_jobs("async-dependent")
        failed = [r for r in records if r.outcome in (Outcome.LATE, Outcome.DROPPED)]
        self.assertGreaterEqual(len(failed), 9)

    def test_dependent_task_misses_in_every_hyperperiod(self):
        records = sorted(self.b_jobs("async-dependent"), key=lambda r: r.job)
        windows = [records[start:start + 33] for start in range(0, len(records) - 32, 33)]
        self.assertGreaterEqual(len(windows), 2)
        for index, window in enumerate(windows):
            with self.subTest(window=index):
                self.assertTrue(any(r.outcome in (Outcome.LATE, Outcome.DROPPED) for r in window))

    def test_independent_tasks_meet_every_deadline(self):
        records = self.b_jobs("async-independent")
        self.assertGreater(len(records), 90)
        self.assertEqual({r.outcome for r in records}, {Outcome.ON_TIME})


class ScenarioValidationTests(SimpleTestCase):
    def test_scenario_level_violations(self):
        dag = DagTask("a", (NodeSpec("n", ms(5)),), deadline_us=ms(10))
        scenario = Scenario(
            name="bad",
            tasks=(dag,),
            mutations=(DagMutation(MutationKind.ADD_NODE, "a", ms(100), node=NodeSpec("m", ms(1))),),
            exec_model=ExecutionModel({("a", "ghost"): Constant(0)}),
            horizon_us=ms(100),
            links=(Link("a", "n", "a", "n"),),
            faults=(Fault("a", "n", 0, FaultKind.BLOCK),),
        )
        codes = validate_scenario(scenario).codes
        for code in ("mutation outside horizon", "unknown node", "bad distribution", "self link",
                     "non-positive block time"):
            self.assertIn(code, codes)

    def test_links_may_target_nodes_added_later(self):
        a = DagTask("a", (NodeSpec("n", ms(5)),), deadline_us=ms(10))
        b = DagTask("b", (NodeSpec("n", ms(5)),), deadline_us=ms(10))
        scenario = Scenario(
            name="late-node",
            tasks=(a, b),
            mutations=(DagMutation(MutationKind.ADD_NODE, "a", ms(50), node=NodeSpec("m", ms(1))),),
            horizon_us=ms(100),
            links=(Link("a", "m", "b", "n"),),
        )
        self.assertTrue(validate_scenario(scenario).ok)


class ScenarioFileTests(SimpleTestCase):
    def test_cyclic_dag_file(self):
        document = {
            "task_id": "loop",
            "deadline_ms": 100,
            "nodes": [{"id": "a", "cost_ms": 1}, {"id": "b", "cost_ms": 1}],
            "edges": [["a", "b"], ["b", "a"]],
        }
        scenario, report = check_document(document)
        self.assertIsNotNone(scenario)
        self.assertIn("cycle", report.codes)

    def test_dag_file_loads_as_a_one_task_scenario(self):
        document = {"task_id": "solo", "deadline_ms": 40, "period_ms": 50, "max_jobs": 3,
                    "nodes": [{"id": "a", "cost_ms": 10}]}
        scenario, report = check_document(document)
        self.assertTrue(report.ok)
        self.assertEqual(scenario.horizon_us, ms(140))
        self.assertEqual(len(jobs(run(scenario, SchedulerConfig()))), 3)

    def test_schema_violation_names_the_field(self):
        document = scenario_to_dict(generate_case_study("async-independent"))
        del document["horizon_ms"]
        scenario, report = check_document(document)
        self.assertIsNone(scenario)
        self.assertEqual(report.codes, ["schema"])
        self.assertIn("horizon_ms", report.violations[0].message)

    def test_distribution_without_its_parameters(self):
        document = scenario_to_dict(generate_case_study("async-independent"))
        document["exec_model"] = [{"task": "A", "node": "infer", "dist": "uniform", "lo_ms": 5}]
        scenario, report = check_document(document)
        self.assertIsNone(scenario)
        self.assertIn("hi_ms", report.violations[0].message)

    def test_dumped_scenario_loads_unchanged(self):
        original = generate_case_study("dynamic-workload", seed=2)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "dynamic.json"
            dump_scenario(original, path)
            loaded, report = load_scenario(path)
        self.assertTrue(report.ok)
        self.assertEqual(loaded, original)


@skipUnless(config("RED_BENCH_PERF", default=False, cast=bool), "set RED_BENCH_PERF=1 to run")
class PerformanceTests(SimpleTestCase):
    def test_hundred_thousand_events_in_five_seconds(self):
        rng = random.Random(7)
        tasks = tuple(
            random_dag(rng, 8, task_id=f"t{i}", edge_probability=0.3, cost_range_us=(ms(1), ms(5)),
                       deadline_us=ms(150), share_probability=0.5, share_groups=("g",))
            for i in range(4)
        )
        tasks = tuple(DagTask(t.task_id, t.nodes, t.edges, t.deadline_us, period_us=ms(200),
                              offset_us=ms(10 * i)) for i, t in enumerate(tasks))
        scenario = Scenario(name="throughput", tasks=tasks, horizon_us=ms(100_000))
        started = time.perf_counter()
        trace = run(scenario, SchedulerConfig(policy=Policy.RED))
        elapsed = time.perf_counter() - started
        self.assertGreaterEqual(len(trace), 100_000)
        self.assertLess(elapsed, 5.0)

    def test_large_random_dags(self):
        rng = random.Random(1)
        tasks = tuple(
            random_dag(rng, 200, task_id=f"t{i}", edge_probability=0.02, deadline_us=ms(20_000),
                       share_probability=0.3, share_groups=("g", "h"))
            for i in range(5)
        )
        tasks = tuple(DagTask(t.task_id, t.nodes, t.edges, t.deadline_us, period_us=ms(10_000)) for t in tasks)
        scenario = Scenario(name="perf", tasks=tasks, horizon_us=ms(100_000))
        trace = run(scenario, SchedulerConfig(policy=Policy.RED))
        self.assertEqual(replay_violations(trace, scenario.horizon_us), [])
