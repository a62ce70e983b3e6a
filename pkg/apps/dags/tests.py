import random
from dataclasses import replace

import networkx as nx
from django.test import SimpleTestCase

from .deadlines import (
    ProgressSnapshot, absolutize, apportion, assign_equal, assign_pinned, assign_proportional, reassign,
)
from .exceptions import BudgetExhausted, CycleDetected, EmptyDag, InvalidMutation
from .formats import DAG_SCHEMA, dag_from_dict, dag_to_dict, schema_errors
from .graph import (
    DagMutation, DagTask, MutationKind, NodeKind, NodeSpec, apply_mutation, compute_heights,
    enumerate_dags, indegree_zero_set, inverse_mutations, levels_of, ms_to_us, random_dag,
    topological_sort, validate_dag,
)
from .refinement import (
    MergeCandidate, RefineConfig, batch_group, contract_split, dynamic_merge, refine, refined_costs,
    semantic_violations, split_cost, split_mimonet_nodes,
)


def ms(value):
    return ms_to_us(value)


def make_dag(costs_ms, edges=(), deadline_ms=120, task_id="t", groups=None, pins=None):
    groups = groups or {}
    pins = pins or {}
    nodes = tuple(
        NodeSpec(node_id, ms(cost), share_group=groups.get(node_id),
                 deadline_us=ms(pins[node_id]) if node_id in pins else None)
        for node_id, cost in costs_ms.items()
    )
    return DagTask(task_id, nodes, frozenset(edges), ms(deadline_ms))


class GraphTests(SimpleTestCase):
    def setUp(self):
        self.diamond = make_dag({"a": 10, "b": 20, "c": 30, "d": 5},
                                [("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")])

    def test_heights_count_longest_path_edges(self):
        self.assertEqual(compute_heights(self.diamond), {"a": 0, "b": 1, "c": 1, "d": 2})

    def test_heights_follow_the_longer_branch(self):
        dag = make_dag({"a": 1, "b": 1, "c": 1, "d": 1}, [("a", "b"), ("b", "c"), ("a", "c"), ("c", "d")])
        self.assertEqual(compute_heights(dag), {"a": 0, "b": 1, "c": 2, "d": 3})

    def test_topological_order_breaks_ties_by_id(self):
        dag = make_dag({"z": 1, "y": 1, "x": 1}, [("z", "x")])
        self.assertEqual(topological_sort(dag), ["y", "z", "x"])

    def test_levels_group_sorted_ids(self):
        self.assertEqual(levels_of(compute_heights(self.diamond)), {0: ["a"], 1: ["b", "c"], 2: ["d"]})

    def test_indegree_zero_set(self):
        self.assertEqual(indegree_zero_set(self.diamond), frozenset({"a"}))

    def test_sinks(self):
        self.assertEqual(self.diamond.sinks, ["d"])

    def test_valid_dag_has_no_violations(self):
        self.assertTrue(validate_dag(self.diamond).ok)

    def test_cycle_is_reported_and_raised(self):
        dag = make_dag({"a": 1, "b": 1, "c": 1}, [("a", "b"), ("b", "c"), ("c", "a")])
        report = validate_dag(dag)
        self.assertIn("cycle", report.codes)
        with self.assertRaises(CycleDetected):
            topological_sort(dag)
        with self.assertRaises(CycleDetected):
            compute_heights(dag)

    def test_structural_violations(self):
        dag = DagTask("t", (
            NodeSpec("a", 0),
            NodeSpec("d", 5, NodeKind.DECODER, "g", decoder_of="ghost"),
        ), frozenset({("a", "nowhere")}), deadline_us=0)
        codes = validate_dag(dag).codes
        for code in ("non-positive cost", "dangling decoder reference", "missing edge endpoint",
                     "non-positive deadline"):
            self.assertIn(code, codes)

    def test_deadline_below_level_count_is_rejected(self):
        nodes = tuple(NodeSpec(node_id, 5) for node_id in "abc")
        chain = DagTask("t", nodes, frozenset({("a", "b"), ("b", "c")}), deadline_us=2)
        self.assertIn("deadline below level count", validate_dag(chain).codes)
        self.assertTrue(validate_dag(replace(chain, deadline_us=3)).ok)
        shared = replace(chain, nodes=(NodeSpec("a", 5, share_group="g"), *nodes[1:]), deadline_us=3)
        self.assertIn("deadline below level count", validate_dag(shared).codes)
        self.assertTrue(validate_dag(replace(shared, deadline_us=4)).ok)

    def test_partial_pins_are_rejected(self):
        dag = make_dag({"a": 10, "b": 10}, [("a", "b")], pins={"a": 50})
        self.assertIn("partial pinned deadlines", validate_dag(dag).codes)

    def test_pins_above_the_deadline_are_rejected(self):
        dag = make_dag({"a": 10, "b": 10}, [("a", "b")], deadline_ms=60, pins={"a": 50, "b": 30})
        self.assertIn("pinned deadlines exceed deadline", validate_dag(dag).codes)

    def test_mutation_leaves_the_original_untouched(self):
        mutated = apply_mutation(self.diamond, DagMutation(MutationKind.REMOVE_NODE, "t", node_id="b"))
        self.assertEqual(mutated.node_ids, ["a", "c", "d"])
        self.assertNotIn(("a", "b"), mutated.edges)
        self.assertEqual(self.diamond.node_ids, ["a", "b", "c", "d"])

    def test_mutation_creating_a_cycle_is_rejected(self):
        with self.assertRaises(InvalidMutation):
            apply_mutation(self.diamond, DagMutation(MutationKind.ADD_EDGE, "t", edge=("d", "a")))

    def test_mutation_on_missing_targets_is_rejected(self):
        bad = [
            DagMutation(MutationKind.REMOVE_NODE, "t", node_id="ghost"),
            DagMutation(MutationKind.REMOVE_EDGE, "t", edge=("a", "d")),
            DagMutation(MutationKind.ADD_NODE, "t", node=NodeSpec("a", 1)),
            DagMutation(MutationKind.ADD_EDGE, "other", edge=("a", "d")),
        ]
        for mutation in bad:
            with self.subTest(mutation=mutation.describe()):
                with self.assertRaises(InvalidMutation):
                    apply_mutation(self.diamond, mutation)

    def test_inverse_mutations_restore_the_dag(self):
        mutations = [
            DagMutation(MutationKind.ADD_NODE, "t", node=NodeSpec("e", ms(3))),
            DagMutation(MutationKind.REMOVE_NODE, "t", node_id="c"),
            DagMutation(MutationKind.ADD_EDGE, "t", edge=("b", "c")),
            DagMutation(MutationKind.REMOVE_EDGE, "t", edge=("a", "b")),
        ]
        for mutation in mutations:
            with self.subTest(mutation=mutation.describe()):
                restored = apply_mutation(self.diamond, mutation)
                for undo in inverse_mutations(self.diamond, mutation):
                    restored = apply_mutation(restored, undo)
                self.assertEqual(restored, self.diamond)

    def test_random_dags_are_acyclic(self):
        rng = random.Random(7)
        for _ in range(50):
            dag = random_dag(rng, rng.randint(1, 30))
            self.assertTrue(validate_dag(dag).ok)

    def test_enumeration_counts(self):
        self.assertEqual(sum(1 for _ in enumerate_dags(3)), 8)
        self.assertEqual(sum(1 for _ in enumerate_dags(4)), 64)


class DeadlineTests(SimpleTestCase):
    def test_parallel_sources_worked_example(self):
        dag = make_dag({"A": 20, "B": 20, "C": 40}, [("A", "C"), ("B", "C")], deadline_ms=120)
        dm = assign_proportional(dag, compute_heights(dag))
        self.assertEqual(dm.relative, {"A": ms(40), "B": ms(40), "C": ms(80)})
        self.assertEqual(dm.total_us, ms(120))

    def test_chain_proportional(self):
        dag = make_dag({"a": 10, "b": 20, "c": 30}, [("a", "b"), ("b", "c")], deadline_ms=120)
        dm = assign_proportional(dag, compute_heights(dag))
        self.assertEqual(dm.level_budgets, {0: ms(20), 1: ms(40), 2: ms(60)})

    def test_equal_split_remainder_goes_deep(self):
        dag = make_dag({"a": 10, "b": 20, "c": 30}, [("a", "b"), ("b", "c")], deadline_ms=100)
        dm = assign_equal(dag, compute_heights(dag))
        self.assertEqual(dm.level_budgets, {0: ms(33), 1: ms(33), 2: ms(34)})

    def test_equal_weights_tie_to_the_deeper_level(self):
        dag = make_dag({"a": 10, "b": 10, "c": 10}, [("a", "b"), ("b", "c")], deadline_ms=100)
        dm = assign_proportional(dag, compute_heights(dag))
        self.assertEqual(dm.level_budgets, {0: ms(33), 1: ms(33), 2: ms(34)})

    def test_sub_quantum_remainder_goes_to_the_deepest_level(self):
        dag = make_dag({"a": 10, "b": 10, "c": 10}, [("a", "b"), ("b", "c")], deadline_ms=100.5)
        dm = assign_equal(dag, compute_heights(dag))
        self.assertEqual(list(dm.level_budgets.values()), [33_000, 33_000, 34_500])

    def test_weight_mode_sum(self):
        dag = make_dag({"a": 10, "b": 10, "c": 20}, [("a", "c"), ("b", "c")], deadline_ms=100)
        heights = compute_heights(dag)
        self.assertEqual(assign_proportional(dag, heights).level_budgets, {0: ms(33), 1: ms(67)})
        self.assertEqual(assign_proportional(dag, heights, weight_mode="sum").level_budgets,
                         {0: ms(50), 1: ms(50)})

    def test_every_level_gets_a_positive_budget(self):
        self.assertEqual(apportion(ms(10), [1, 1_000_000, 1]), [ms(1), ms(8), ms(1)])

    def test_budget_below_level_count_is_refused(self):
        with self.assertRaises(ValueError):
            apportion(2, [1, 1, 1])
        with self.assertRaises(EmptyDag):
            apportion(ms(10), [])

    def test_budgets_sum_to_the_deadline(self):
        rng = random.Random(2024)
        for index in range(1000):
            size = rng.randint(1, 200) if index % 10 == 0 else rng.randint(1, 40)
            dag = random_dag(rng, size, edge_probability=rng.choice([0.05, 0.3]))
            heights = compute_heights(dag)
            for dm in (assign_proportional(dag, heights), assign_equal(dag, heights)):
                self.assertEqual(dm.total_us, dag.deadline_us)
                self.assertTrue(all(budget > 0 for budget in dm.level_budgets.values()))

    def test_absolute_deadlines_grow_along_edges(self):
        rng = random.Random(11)
        for _ in range(100):
            dag = random_dag(rng, rng.randint(2, 25))
            heights = compute_heights(dag)
            dm = absolutize(assign_proportional(dag, heights), heights, release_us=5_000)
            for u, v in dag.edges:
                self.assertLess(dm.absolute[u], dm.absolute[v])
            by_level = {}
            for node_id, deadline in dm.absolute.items():
                by_level.setdefault(heights[node_id], set()).add(deadline)
            self.assertTrue(all(len(values) == 1 for values in by_level.values()))
            self.assertEqual(max(dm.absolute.values()), 5_000 + dag.deadline_us)

    def test_budgets_never_shrink_when_the_deadline_grows(self):
        weights = [ms(3), ms(5), ms(7)]
        previous = apportion(ms(10), weights)
        for total_ms in range(11, 80):
            current = apportion(ms(total_ms), weights)
            self.assertTrue(all(b >= a for a, b in zip(previous, current)), (total_ms, previous, current))
            previous = current

    def test_pinned_assignment(self):
        dag = make_dag({"A": 12, "B": 18}, [("A", "B")], deadline_ms=130, pins={"A": 50, "B": 30})
        dm = assign_pinned(dag, compute_heights(dag))
        self.assertEqual(dm.relative, {"A": ms(50), "B": ms(30)})
        self.assertEqual(dm.total_us, ms(80))

    def test_reassign_spreads_the_residual_budget(self):
        dag = make_dag({"a": 10, "b": 20, "c": 30}, [("a", "b"), ("b", "c")], deadline_ms=120)
        snap = ProgressSnapshot(now_us=ms(10), job_release_us=0, completed=frozenset({"a"}))
        dm = reassign(dag, compute_heights(dag), snap, deadline_abs=ms(120))
        self.assertEqual(dm.absolute, {"b": ms(54), "c": ms(120)})

    def test_completing_on_the_deadline_leaves_later_deadlines_alone(self):
        dag = make_dag({"a": 15, "b": 25, "c": 35, "d": 45}, [("a", "b"), ("b", "c"), ("c", "d")],
                       deadline_ms=200)
        heights = compute_heights(dag)
        initial = absolutize(assign_proportional(dag, heights), heights, release_us=0).absolute
        self.assertEqual(initial, {"a": ms(25), "b": ms(67), "c": ms(125), "d": ms(200)})
        for done in ("a", "ab", "abc"):
            snap = ProgressSnapshot(initial[done[-1]], 0, frozenset(done))
            dm = reassign(dag, heights, snap, deadline_abs=ms(200))
            self.assertEqual(dm.absolute, {n: d for n, d in initial.items() if n not in done})

    def test_scaling_every_cost_leaves_budgets_unchanged(self):
        rng = random.Random(17)
        for _ in range(200):
            dag = random_dag(rng, rng.randint(1, 15), deadline_us=ms(rng.randint(20, 2000)))
            heights = compute_heights(dag)
            factor = rng.randint(2, 9)
            scaled = replace(dag, nodes=tuple(replace(n, cost_us=n.cost_us * factor) for n in dag.nodes))
            self.assertEqual(assign_proportional(scaled, heights).level_budgets,
                             assign_proportional(dag, heights).level_budgets)

    def test_reassign_uses_remaining_cost(self):
        dag = make_dag({"a": 10, "b": 20, "c": 30}, [("a", "b"), ("b", "c")], deadline_ms=120)
        snap = ProgressSnapshot(ms(10), 0, frozenset({"a"}), {"b": ms(30), "c": ms(30)})
        dm = reassign(dag, compute_heights(dag), snap, deadline_abs=ms(120))
        self.assertEqual(dm.absolute, {"b": ms(65), "c": ms(120)})

    def test_reassign_after_the_deadline_fails(self):
        dag = make_dag({"a": 10}, deadline_ms=20)
        snap = ProgressSnapshot(ms(20), 0)
        with self.assertRaises(BudgetExhausted):
            reassign(dag, compute_heights(dag), snap, deadline_abs=ms(20))

    def test_reassign_with_nothing_left(self):
        dag = make_dag({"a": 10}, deadline_ms=20)
        snap = ProgressSnapshot(ms(10), 0, frozenset({"a"}))
        with self.assertRaises(EmptyDag):
            reassign(dag, compute_heights(dag), snap, deadline_abs=ms(20))

    def test_snapshot_checks(self):
        with self.assertRaises(ValueError):
            ProgressSnapshot(now_us=5, job_release_us=10)
        with self.assertRaises(ValueError):
            ProgressSnapshot(10, 0, frozenset({"a"}), {"a": 3})

    def test_empty_dag_is_refused(self):
        dag = DagTask("t", (), deadline_us=ms(10))
        with self.assertRaises(EmptyDag):
            assign_proportional(dag, {})


def expected_merge_groups(dags, gamma_us):
    """Greedy sweep per peel layer, computed from longest-path depths of the split graphs."""
    task_ids = [dag.task_id for dag, _ in dags]
    graph, info = nx.DiGraph(), {}
    for index, (dag, release) in enumerate(dags):
        if len(dags) == 1:
            prefix = ""
        elif task_ids.count(dag.task_id) > 1:
            prefix = f"{dag.task_id}.{index}:"
        else:
            prefix = f"{dag.task_id}:"
        split = split_mimonet_nodes(dag)
        for node in split.nodes:
            graph.add_node(prefix + node.id)
            info[prefix + node.id] = (node, release)
        graph.add_edges_from((prefix + u, prefix + v) for u, v in split.edges)

    depth = {}
    for label in nx.topological_sort(graph):
        depth[label] = max((depth[p] + 1 for p in graph.predecessors(label)), default=0)

    layers = {}
    for label, (node, release) in info.items():
        if node.kind is NodeKind.SHARED_ENCODER:
            layers.setdefault((depth[label], node.share_group), []).append((release, label))

    expected = set()
    for members in layers.values():
        group, anchor = [], None
        for release, label in sorted(members):
            if group and release - anchor > gamma_us:
                if len(group) > 1:
                    expected.add(frozenset(group))
                group = []
            if not group:
                anchor = release
            group.append(label)
        if len(group) > 1:
            expected.add(frozenset(group))
    return expected


def with_groups(dag, every=1):
    nodes = tuple(replace(node, share_group="g") if i % every == 0 else node
                  for i, node in enumerate(dag.nodes))
    return replace(dag, nodes=nodes)


class RefinementTests(SimpleTestCase):
    def setUp(self):
        # lane -> (segmentation, obstacle) -> control; the two perception nodes share a backbone
        self.perception = make_dag({"L": 20, "S": 30, "O": 25, "C": 10},
                                   [("L", "S"), ("L", "O"), ("S", "C"), ("O", "C")],
                                   groups={"S": "mimo", "O": "mimo"}, deadline_ms=200)

    def test_split_cost(self):
        self.assertEqual(split_cost(ms(10), 0.6), (ms(6), ms(4)))
        self.assertEqual(split_cost(2, 0.99), (1, 1))
        self.assertIsNone(split_cost(1, 0.5))

    def test_split_rewires_edges(self):
        split = split_mimonet_nodes(self.perception)
        self.assertEqual(sorted(split.edges), [
            ("L", "O#enc"), ("L", "S#enc"), ("O#dec", "C"), ("O#enc", "O#dec"),
            ("S#dec", "C"), ("S#enc", "S#dec"),
        ])
        self.assertIs(split.node("S#enc").kind, NodeKind.SHARED_ENCODER)
        self.assertEqual(split.node("S#dec").decoder_of, "S#enc")
        self.assertEqual(split.node("S#enc").cost_us + split.node("S#dec").cost_us, ms(30))
        self.assertTrue(validate_dag(split).ok)

    def test_contracting_a_split_restores_the_dag(self):
        self.assertEqual(contract_split(split_mimonet_nodes(self.perception)), self.perception)

    def test_split_of_a_pinned_dag_keeps_the_pinned_total(self):
        dag = make_dag({"A": 12, "B": 18}, [("A", "B")], deadline_ms=130,
                       groups={"A": "g"}, pins={"A": 50, "B": 30})
        split = split_mimonet_nodes(dag)
        self.assertEqual(split.deadline_us, ms(80))
        self.assertFalse(split.pinned)

    def test_same_layer_encoders_merge(self):
        refined = refine([(self.perception, 0)])
        self.assertEqual([group.members for group in refined.merge_groups], [("O#enc", "S#enc")])
        merged = "O#enc+S#enc"
        heights = compute_heights(refined.graph)
        self.assertEqual(heights, {"L": 0, merged: 1, "O#dec": 2, "S#dec": 2, "C": 3})
        self.assertEqual(refined.origins(merged), frozenset({"O", "S"}))
        self.assertEqual(semantic_violations([(self.perception, 0)], refined), [])

    def test_merged_encoder_costs_its_longest_member(self):
        refined = refine([(self.perception, 0)])
        samples = {("t", node_id): self.perception.node(node_id).cost_us for node_id in "LSOC"}
        costs = refined_costs(refined, samples)
        self.assertEqual(costs["O#enc+S#enc"], ms(18))
        self.assertEqual(costs["S#dec"], ms(12))
        self.assertEqual(costs["O#dec"], ms(10))

    def test_merge_surcharge(self):
        refined = refine([(self.perception, 0)], RefineConfig(merge_surcharge_us=ms(1)))
        samples = {("t", node_id): self.perception.node(node_id).cost_us for node_id in "LSOC"}
        self.assertEqual(refined_costs(refined, samples, RefineConfig(merge_surcharge_us=ms(1)))["O#enc+S#enc"],
                         ms(19))

    def test_dynamic_merge_sweeps_from_the_earliest_release(self):
        encoder = NodeSpec("e", ms(5), NodeKind.SHARED_ENCODER, "g")
        other = NodeSpec("f", ms(5), NodeKind.SHARED_ENCODER, "h")
        plain = NodeSpec("p", ms(5))
        ready = [
            MergeCandidate("e0", 0, encoder),
            MergeCandidate("e50", ms(50), encoder),
            MergeCandidate("e120", ms(120), encoder),
            MergeCandidate("e130", ms(130), encoder),
            MergeCandidate("f10", ms(10), other),
            MergeCandidate("p0", 0, plain),
        ]
        groups = {group.members for group in dynamic_merge(ready, RefineConfig(gamma_us=ms(100)))}
        self.assertEqual(groups, {("e0", "e50"), ("e120", "e130"), ("f10",), ("p0",)})

    def test_zero_gamma_merges_only_simultaneous_releases(self):
        encoder = NodeSpec("e", ms(5), NodeKind.SHARED_ENCODER, "g")
        ready = [MergeCandidate("a", 0, encoder), MergeCandidate("b", 0, encoder), MergeCandidate("c", 1, encoder)]
        groups = [group.members for group in dynamic_merge(ready, RefineConfig(gamma_us=0))]
        self.assertEqual(groups, [("a", "b"), ("c",)])

    def test_merge_groups_respect_gamma(self):
        rng = random.Random(5)
        encoder = NodeSpec("e", ms(5), NodeKind.SHARED_ENCODER, "g")
        for _ in range(200):
            gamma = rng.choice([0, ms(10), ms(100)])
            ready = [MergeCandidate(f"n{i}", ms(rng.randint(0, 300)), encoder) for i in range(rng.randint(1, 8))]
            groups = dynamic_merge(ready, RefineConfig(gamma_us=gamma))
            self.assertEqual(sorted(m for g in groups for m in g.members), sorted(c.key for c in ready))
            for group in groups:
                self.assertLessEqual(group.release_span_us, gamma)
            ordered = sorted(groups, key=lambda g: g.earliest_release_us)
            for before, after in zip(ordered, ordered[1:]):
                self.assertGreater(after.earliest_release_us - before.earliest_release_us, gamma)

    def test_larger_gamma_never_adds_groups(self):
        rng = random.Random(23)
        encoder = NodeSpec("e", ms(5), NodeKind.SHARED_ENCODER, "g")
        for _ in range(200):
            ready = [MergeCandidate(f"n{i}", ms(rng.randint(0, 300)), encoder) for i in range(rng.randint(1, 10))]
            previous = None
            for gamma_ms in (0, 5, 10, 25, 50, 100, 300):
                groups = dynamic_merge(ready, RefineConfig(gamma_us=ms(gamma_ms)))
                first = len(groups[0].members)
                if previous is not None:
                    self.assertLessEqual(len(groups), previous[0])
                    self.assertGreaterEqual(first, previous[1])
                previous = (len(groups), first)

    def test_refine_matches_the_sweep_oracle_on_small_dags(self):
        cfg = RefineConfig(gamma_us=ms(100))
        for size in range(1, 5):
            for base in enumerate_dags(size):
                for every in (1, 2):
                    dag = with_groups(base, every)
                    for second_release in (None, 0, ms(60), ms(150)):
                        dags = [(dag, 0)]
                        if second_release is not None:
                            dags.append((replace(dag, task_id="u"), second_release))
                        refined = refine(dags, cfg)
                        found = {frozenset(group.members) for group in refined.merge_groups}
                        self.assertEqual(found, expected_merge_groups(dags, cfg.gamma_us),
                                         (sorted(dag.edges), every, second_release))
                        self.assertEqual(semantic_violations(dags, refined), [])
                        self.assertTrue(validate_dag(refined.graph).ok)

    def test_refine_matches_the_sweep_oracle_on_sampled_dags(self):
        rng = random.Random(8)
        cfg = RefineConfig(gamma_us=ms(100))
        for _ in range(150):
            size = rng.randint(5, 8)
            dags = [(random_dag(rng, size, share_probability=0.6, share_groups=("g", "h")), 0)]
            if rng.random() < 0.5:
                second = random_dag(rng, rng.randint(1, 8), task_id="u", share_probability=0.6,
                                    share_groups=("g", "h"))
                dags.append((second, ms(rng.choice([0, 40, 100, 180]))))
            refined = refine(dags, cfg)
            found = {frozenset(group.members) for group in refined.merge_groups}
            self.assertEqual(found, expected_merge_groups(dags, cfg.gamma_us))
            self.assertEqual(semantic_violations(dags, refined), [])

    def test_unrefinable_dag_is_unchanged(self):
        dag = make_dag({"a": 10, "b": 10}, [("a", "b")])
        refined = refine([(dag, 0)])
        self.assertEqual(refined.graph, dag)
        self.assertEqual(refined.merge_groups, ())

    def test_batch_group_cost(self):
        batch = batch_group(["x", "y", "z"], RefineConfig(batch_base_us=ms(2), batch_per_item_us=ms(1)))
        self.assertEqual(batch.cost_us, ms(5))
        self.assertEqual(batch.id, "x+y+z")
        self.assertIsNone(batch_group([]))

    def test_decoders_of_different_tasks_batch(self):
        cfg = RefineConfig(batch_decoders=True, batch_base_us=ms(1), batch_per_item_us=ms(2))
        a = make_dag({"X": 10}, task_id="a", groups={"X": "g"})
        b = make_dag({"X": 10}, task_id="b", groups={"X": "g"})
        refined = refine([(a, 0), (b, 0)], cfg)
        self.assertEqual([g.members for g in refined.merge_groups], [("a:X#enc", "b:X#enc")])
        self.assertEqual([batch.members for batch in refined.batches], [("a:X#dec", "b:X#dec")])
        samples = {("a", "X"): ms(10), ("b", "X"): ms(10)}
        self.assertEqual(refined_costs(refined, samples, cfg)["a:X#dec+b:X#dec"], ms(5))

    def test_refine_rejects_cycles(self):
        dag = make_dag({"a": 1, "b": 1}, [("a", "b"), ("b", "a")])
        with self.assertRaises(CycleDetected):
            refine([(dag, 0)])

    def test_config_checks(self):
        for kwargs in ({"gamma_us": -1}, {"default_split_ratio": 1.0}, {"batch_base_us": -1},
                       {"split_ratios": {"g": 0.0}}):
            with self.subTest(**{k: str(v) for k, v in kwargs.items()}):
                with self.assertRaises(ValueError):
                    RefineConfig(**kwargs)


class FormatTests(SimpleTestCase):
    document = {
        "task_id": "drive",
        "deadline_ms": 130,
        "period_ms": 50,
        "nodes": [
            {"id": "A", "cost_ms": 12, "deadline_ms": 50},
            {"id": "B", "cost_ms": 18, "deadline_ms": 30},
        ],
        "edges": [["A", "B"]],
        "mutations": [{"at_ms": 3000, "kind": "remove_edge", "edge": ["A", "B"]}],
    }

    def test_load_dag_document(self):
        dag, mutations = dag_from_dict(self.document)
        self.assertEqual(dag.deadline_us, ms(130))
        self.assertEqual(dag.period_us, ms(50))
        self.assertEqual(dag.node("A").deadline_us, ms(50))
        self.assertTrue(dag.pinned)
        self.assertEqual(mutations, [DagMutation(MutationKind.REMOVE_EDGE, "drive", ms(3000), edge=("A", "B"))])

    def test_dump_then_load_keeps_the_dag(self):
        dag, mutations = dag_from_dict(self.document)
        self.assertEqual(dag_from_dict(dag_to_dict(dag, mutations)), (dag, mutations))

    def test_schema_names_the_missing_field(self):
        document = {k: v for k, v in self.document.items() if k != "deadline_ms"}
        errors = schema_errors(document, DAG_SCHEMA)
        self.assertEqual(len(errors), 1)
        self.assertIn("deadline_ms", errors[0])

    def test_schema_paths_point_into_nested_items(self):
        document = dict(self.document, nodes=[{"id": "A", "cost_ms": -1}])
        self.assertEqual([e.split(":")[0] for e in schema_errors(document, DAG_SCHEMA)], ["nodes/0/cost_ms"])
