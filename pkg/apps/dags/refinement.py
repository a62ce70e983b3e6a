"""Refinement of DAGs that run weight-shared multi-task networks.

A monolithic node tagged with a share group is split into a shared encoder
and its own decoder. ``refine`` then peels the graph layer by layer
(indegree-zero sets) and merges same-group encoders of a layer whose
releases lie within ``gamma`` of each other, so the shared encoder runs
once for all of them.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, NamedTuple, Sequence

import networkx as nx

from .deadlines import assign_pinned
from .exceptions import CycleDetected
from .graph import DagTask, NodeKind, NodeSpec, compute_heights, topological_sort

logger = logging.getLogger('scheduling')

ENCODER_SUFFIX = "#enc"
DECODER_SUFFIX = "#dec"
DEFAULT_SPLIT_RATIO = 0.6


@dataclass(frozen=True)
class RefineConfig:
    gamma_us: int = 100_000
    batch_base_us: int = 0
    batch_per_item_us: int = 0
    # Encoder share of a split node's cost, per share group (synthetic default).
    split_ratios: Mapping[str, float] = field(default_factory=dict)
    default_split_ratio: float = DEFAULT_SPLIT_RATIO
    merge_surcharge_us: int = 0
    batch_decoders: bool = False

    def __post_init__(self):
        if self.gamma_us < 0:
            raise ValueError("gamma must be >= 0")
        if self.batch_base_us < 0 or self.batch_per_item_us < 0:
            raise ValueError("batch cost terms must be >= 0")
        if self.merge_surcharge_us < 0:
            raise ValueError("merge surcharge must be >= 0")
        for ratio in [self.default_split_ratio, *self.split_ratios.values()]:
            if not 0 < ratio < 1:
                raise ValueError(f"split ratio {ratio} must lie strictly between 0 and 1")

    def split_ratio(self, share_group: str | None) -> float:
        return self.split_ratios.get(share_group, self.default_split_ratio)


def split_cost(cost_us: int, ratio: float) -> tuple[int, int] | None:
    """Encoder and decoder cost of a split node, or None if it is too small to split."""
    if cost_us < 2:
        return None
    encoder = min(max(1, int(round(cost_us * ratio))), cost_us - 1)
    return encoder, cost_us - encoder


def origin_of(piece_id: str) -> str:
    for suffix in (ENCODER_SUFFIX, DECODER_SUFFIX):
        if piece_id.endswith(suffix):
            return piece_id[: -len(suffix)]
    return piece_id


def split_mimonet_nodes(dag: DagTask, cfg: RefineConfig | None = None) -> DagTask:
    """Split every share-group node into encoder -> decoder.

    Incoming edges attach to the encoder, outgoing edges leave the decoder.
    Pinned deadlines do not survive a split; the job keeps their total as
    its end-to-end deadline.
    """
    cfg = cfg or RefineConfig()
    parts = {}
    for node in dag.nodes:
        if node.splittable:
            costs = split_cost(node.cost_us, cfg.split_ratio(node.share_group))
            if costs is not None:
                parts[node.id] = costs
    if not parts:
        return dag

    def entry(node_id):
        return node_id + ENCODER_SUFFIX if node_id in parts else node_id

    def exit_(node_id):
        return node_id + DECODER_SUFFIX if node_id in parts else node_id

    nodes = []
    edges = set()
    for node in dag.nodes:
        if node.id in parts:
            encoder_cost, decoder_cost = parts[node.id]
            encoder = NodeSpec(entry(node.id), encoder_cost, NodeKind.SHARED_ENCODER, node.share_group)
            decoder = NodeSpec(exit_(node.id), decoder_cost, NodeKind.DECODER, node.share_group,
                               decoder_of=encoder.id)
            nodes.extend([encoder, decoder])
            edges.add((encoder.id, decoder.id))
        else:
            nodes.append(replace(node, deadline_us=None))
    edges.update((exit_(u), entry(v)) for u, v in dag.edges)

    deadline = dag.deadline_us
    if dag.pinned:
        deadline = assign_pinned(dag, compute_heights(dag)).total_us
    return replace(dag, nodes=tuple(nodes), edges=frozenset(edges), deadline_us=deadline)


def contract_split(dag: DagTask) -> DagTask:
    """Fold every encoder/decoder pair produced by a split back into one node."""
    pairs = {}
    for node in dag.nodes:
        if node.kind is NodeKind.DECODER and node.id.endswith(DECODER_SUFFIX):
            base = origin_of(node.id)
            encoder = dag.node_map.get(base + ENCODER_SUFFIX)
            if encoder is not None and node.decoder_of == encoder.id:
                pairs[base] = (encoder, node)
    if not pairs:
        return dag

    rename = {}
    nodes = []
    for base, (encoder, decoder) in pairs.items():
        rename[encoder.id] = rename[decoder.id] = base
        nodes.append(NodeSpec(base, encoder.cost_us + decoder.cost_us, NodeKind.MONOLITHIC,
                              encoder.share_group))
    nodes.extend(node for node in dag.nodes if node.id not in rename)
    edges = {
        (rename.get(u, u), rename.get(v, v))
        for u, v in dag.edges
        if rename.get(u, u) != rename.get(v, v)
    }
    return replace(dag, nodes=tuple(nodes), edges=frozenset(edges))


class MergeCandidate(NamedTuple):
    key: str
    release_us: int
    node: NodeSpec


@dataclass(frozen=True)
class MergedTask:
    members: tuple[str, ...]
    share_group: str | None
    merged_cost_us: int
    release_us: int
    release_span_us: int

    @property
    def earliest_release_us(self) -> int:
        return self.release_us - self.release_span_us


def _merge(candidates: Sequence[MergeCandidate], cfg: RefineConfig) -> MergedTask:
    releases = [c.release_us for c in candidates]
    cost = max(c.node.cost_us for c in candidates) + cfg.merge_surcharge_us * (len(candidates) - 1)
    group = candidates[0].node.share_group if candidates[0].node.kind is NodeKind.SHARED_ENCODER else None
    return MergedTask(
        members=tuple(c.key for c in candidates),
        share_group=group,
        merged_cost_us=cost,
        release_us=max(releases),
        release_span_us=max(releases) - min(releases),
    )


def dynamic_merge(ready: Iterable[MergeCandidate], cfg: RefineConfig | None = None) -> list[MergedTask]:
    """Partition ready nodes into merge groups.

    Encoders of one share group are swept in release order; a group opens
    at its earliest member and takes every later encoder released at most
    ``gamma`` after it. Everything else stays a singleton.
    """
    cfg = cfg or RefineConfig()
    groups = []
    encoders = {}
    for candidate in sorted(ready, key=lambda c: (c.release_us, c.key)):
        node = candidate.node
        if node.kind is NodeKind.SHARED_ENCODER and node.share_group:
            encoders.setdefault(node.share_group, []).append(candidate)
        else:
            groups.append(_merge([candidate], cfg))

    for _, candidates in sorted(encoders.items()):
        current = []
        for candidate in candidates:
            if current and candidate.release_us - current[0].release_us > cfg.gamma_us:
                groups.append(_merge(current, cfg))
                current = []
            current.append(candidate)
        groups.append(_merge(current, cfg))

    return sorted(groups, key=lambda g: (g.earliest_release_us, g.members))


@dataclass(frozen=True)
class BatchNode:
    members: tuple[str, ...]
    cost_us: int

    @property
    def id(self) -> str:
        return "+".join(self.members)


def batch_group(decoders: Iterable[str], cfg: RefineConfig | None = None) -> BatchNode | None:
    """One batched execution for decoders at the same refined height."""
    cfg = cfg or RefineConfig()
    members = tuple(sorted(decoders))
    if not members:
        return None
    return BatchNode(members, cfg.batch_base_us + cfg.batch_per_item_us * len(members))


class Piece(NamedTuple):
    task_id: str
    origin: str
    part: str  # "whole", "enc" or "dec"
    share_group: str | None = None


@dataclass(frozen=True)
class RefinedDag:
    graph: DagTask
    merge_groups: tuple[MergedTask, ...]
    provenance: Mapping[str, frozenset[tuple[str, str]]]
    members: Mapping[str, tuple[str, ...]]
    pieces: Mapping[str, Piece]
    releases: Mapping[str, int]
    batches: tuple[BatchNode, ...] = ()

    def origins(self, node_id: str) -> frozenset[str]:
        return frozenset(origin for _, origin in self.provenance[node_id])


def _piece(task_id: str, node: NodeSpec) -> Piece:
    if node.id.endswith(ENCODER_SUFFIX) and node.kind is NodeKind.SHARED_ENCODER:
        return Piece(task_id, origin_of(node.id), "enc", node.share_group)
    if node.id.endswith(DECODER_SUFFIX) and node.kind is NodeKind.DECODER:
        return Piece(task_id, origin_of(node.id), "dec", node.share_group)
    return Piece(task_id, node.id, "whole", node.share_group)


def refine(dags: Sequence[tuple[DagTask, int]], cfg: RefineConfig | None = None) -> RefinedDag:
    """Build the fine-grained graph by peeling indegree-zero layers and merging each one."""
    cfg = cfg or RefineConfig()
    task_ids = [dag.task_id for dag, _ in dags]
    specs, releases, pieces = {}, {}, {}
    label_edges = []
    residual = nx.DiGraph()

    for index, (dag, release_us) in enumerate(dags):
        topological_sort(dag)
        if len(dags) == 1:
            prefix = ""
        elif task_ids.count(dag.task_id) > 1:
            prefix = f"{dag.task_id}.{index}:"
        else:
            prefix = f"{dag.task_id}:"
        split = split_mimonet_nodes(dag, cfg)
        for node in split.nodes:
            label = prefix + node.id
            decoder_of = prefix + node.decoder_of if node.decoder_of else None
            specs[label] = replace(node, id=label, decoder_of=decoder_of)
            releases[label] = release_us
            pieces[label] = _piece(dag.task_id, node)
            residual.add_node(label)
        for u, v in sorted(split.edges):
            label_edges.append((prefix + u, prefix + v))
    residual.add_edges_from(label_edges)

    mapping, members_of, merged_specs = {}, {}, {}
    merge_groups, batches = [], []
    iterations = 0
    while residual.number_of_nodes():
        layer = sorted(node for node, degree in residual.in_degree() if degree == 0)
        if not layer:
            raise CycleDetected(sorted(residual.nodes))
        iterations += 1
        groups = dynamic_merge([MergeCandidate(n, releases[n], specs[n]) for n in layer], cfg)

        singles = []
        for group in groups:
            if len(group.members) > 1:
                node_id = "+".join(group.members)
                merge_groups.append(group)
                members_of[node_id] = group.members
                merged_specs[node_id] = NodeSpec(node_id, group.merged_cost_us,
                                                 NodeKind.SHARED_ENCODER, group.share_group)
                mapping.update({member: node_id for member in group.members})
            else:
                singles.append(group.members[0])

        decoders = [n for n in singles if specs[n].kind is NodeKind.DECODER]
        if cfg.batch_decoders and len({pieces[n].task_id for n in decoders}) > 1:
            batch = batch_group(decoders, cfg)
            batches.append(batch)
            members_of[batch.id] = batch.members
            merged_specs[batch.id] = NodeSpec(batch.id, max(batch.cost_us, 1))
            mapping.update({member: batch.id for member in batch.members})
            singles = [n for n in singles if n not in batch.members]
        for label in singles:
            mapping[label] = label
            members_of[label] = (label,)
        residual.remove_nodes_from(layer)

    nodes = []
    provenance, refined_releases = {}, {}
    for node_id, members in members_of.items():
        if node_id in merged_specs:
            spec = merged_specs[node_id]
        else:
            spec = specs[node_id]
            if spec.decoder_of is not None:
                spec = replace(spec, decoder_of=mapping[spec.decoder_of])
        nodes.append(spec)
        provenance[node_id] = frozenset((pieces[m].task_id, pieces[m].origin) for m in members)
        refined_releases[node_id] = max(releases[m] for m in members)
    edges = {(mapping[u], mapping[v]) for u, v in label_edges if mapping[u] != mapping[v]}

    if len(dags) == 1:
        source = dags[0][0]
        graph = replace(source, nodes=tuple(nodes), edges=frozenset(edges),
                        deadline_us=split_mimonet_nodes(source, cfg).deadline_us)
    else:
        graph = DagTask(
            "+".join(dict.fromkeys(task_ids)),
            tuple(nodes),
            frozenset(edges),
            max(split_mimonet_nodes(dag, cfg).deadline_us for dag, _ in dags),
        )
    logger.debug(
        f"Refined {'+'.join(task_ids)} in {iterations} layers: "
        f"{len(merge_groups)} merge groups, {len(batches)} batches"
    )
    return RefinedDag(graph, tuple(merge_groups), provenance, members_of, pieces,
                      refined_releases, tuple(batches))


def refined_costs(refined: RefinedDag, samples: Mapping[tuple[str, str], int],
                  cfg: RefineConfig | None = None) -> dict[str, int]:
    """Execution time of every refined node given sampled costs per original node.

    ``samples`` maps (task_id, original node id) to the whole node's cost;
    split pieces take their share of it, merged encoders run once at the
    cost of their longest member.
    """
    cfg = cfg or RefineConfig()
    batched = {batch.id: batch for batch in refined.batches}
    pieces = piece_costs(refined, samples, cfg)

    costs = {}
    for node_id, members in refined.members.items():
        if node_id in batched:
            costs[node_id] = max(batched[node_id].cost_us, 1)
        elif len(members) > 1:
            costs[node_id] = (max(pieces[m] for m in members)
                              + cfg.merge_surcharge_us * (len(members) - 1))
        else:
            costs[node_id] = max(pieces[members[0]], 1)
    return costs


def piece_costs(refined: RefinedDag, samples: Mapping[tuple[str, str], int],
                cfg: RefineConfig | None = None) -> dict[str, int]:
    """Cost of every piece label before merging."""
    cfg = cfg or RefineConfig()
    costs = {}
    for label, piece in refined.pieces.items():
        total = samples[(piece.task_id, piece.origin)]
        if piece.part == "whole":
            costs[label] = total
            continue
        encoder, decoder = split_cost(total, cfg.split_ratio(piece.share_group)) or (total, 0)
        costs[label] = encoder if piece.part == "enc" else decoder
    return costs


def semantic_violations(dags: Sequence[tuple[DagTask, int]], refined: RefinedDag) -> list[str]:
    """Original nodes whose refined counterpart lost an input or gained one outside a merge.

    Every original ancestor must still reach the node's final piece. Inputs
    of the same task that the original never had may only arrive through a
    merged or batched node, which runs once for all of its members.
    """
    merged = {node_id for node_id, members in refined.members.items() if len(members) > 1}
    graph = refined.graph.to_networkx()
    heights = compute_heights(refined.graph)
    problems = []
    for dag, _ in dags:
        original = dag.to_networkx()
        for node_id in dag.node_ids:
            expected = {(dag.task_id, a) for a in nx.ancestors(original, node_id)} | {(dag.task_id, node_id)}
            holders = [n for n, prov in refined.provenance.items() if (dag.task_id, node_id) in prov]
            if not holders:
                problems.append(f"{dag.task_id}/{node_id} vanished")
                continue
            final = max(holders, key=lambda n: (heights[n], n))
            reached = set(refined.provenance[final])
            for ancestor in nx.ancestors(graph, final):
                reached |= refined.provenance[ancestor]
            if not expected <= reached:
                problems.append(f"{dag.task_id}/{node_id} lost an input")
                continue

            direct = set() if final in merged else set(refined.provenance[final])
            stack, seen = [final], {final}
            while stack:
                for pred in graph.predecessors(stack.pop()):
                    if pred in seen or pred in merged:
                        continue
                    seen.add(pred)
                    direct |= refined.provenance[pred]
                    stack.append(pred)
            extra = {pair for pair in direct if pair[0] == dag.task_id} - expected
            if extra:
                problems.append(f"{dag.task_id}/{node_id} gained {', '.join(sorted(o for _, o in extra))}")
    return problems
