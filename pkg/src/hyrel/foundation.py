"""Relation and entity foundation graphs.

Both graphs encode position-wise interaction patterns of a hyper-relational
KG rather than the identity of any particular relation or entity, which is
what makes models trained on them transfer to disjoint vocabularies.

The relation foundation graph has one node per relation id.  Its edges record
how two relations co-occur: via a shared anchor entity of their primary
triplets across distinct facts (head-to-head, head-to-tail, tail-to-head,
tail-to-tail), via the primary-relation/key pairing inside one fact
(relation-to-key and back), optionally via key-to-key pairs inside one fact,
and optionally via shared qualifier values across distinct facts
(head-to-value, tail-to-value, value-to-value and their reciprocals).

The entity foundation graph has one node per entity id and only intra-fact
edges: head-tail, head-value, tail-value and value-value pairs within a
single fact.  Cross-fact connectivity arises solely from entities shared by
several facts.

Every edge type has a reciprocal type and every built graph is closed under
reciprocity: for each edge (u, t, v) the edge (v, reciprocal(t), u) exists.
Edges are deduplicated; multiplicity is deliberately not modeled.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, ContractError
from .model import Hkg


class RelInteraction(Enum):
    """Edge types of the relation foundation graph."""

    H2H = "h2h_r"
    H2T = "h2t_r"
    T2H = "t2h_r"
    T2T = "t2t_r"
    R2K = "r2k_r"
    K2R = "k2r_r"
    K2K = "k2k_r"
    H2V = "h2v_r"
    V2H = "v2h_r"
    T2V = "t2v_r"
    V2T = "v2t_r"
    V2V = "v2v_r"


class EntInteraction(Enum):
    """Edge types of the entity foundation graph (all intra-fact)."""

    H2T = "h2t_e"
    T2H = "t2h_e"
    H2V = "h2v_e"
    V2H = "v2h_e"
    T2V = "t2v_e"
    V2T = "v2t_e"
    V2V = "v2v_e"


REL_RECIPROCAL: dict[RelInteraction, RelInteraction] = {
    RelInteraction.H2H: RelInteraction.H2H,
    RelInteraction.H2T: RelInteraction.T2H,
    RelInteraction.T2H: RelInteraction.H2T,
    RelInteraction.T2T: RelInteraction.T2T,
    RelInteraction.R2K: RelInteraction.K2R,
    RelInteraction.K2R: RelInteraction.R2K,
    RelInteraction.K2K: RelInteraction.K2K,
    RelInteraction.H2V: RelInteraction.V2H,
    RelInteraction.V2H: RelInteraction.H2V,
    RelInteraction.T2V: RelInteraction.V2T,
    RelInteraction.V2T: RelInteraction.T2V,
    RelInteraction.V2V: RelInteraction.V2V,
}

ENT_RECIPROCAL: dict[EntInteraction, EntInteraction] = {
    EntInteraction.H2T: EntInteraction.T2H,
    EntInteraction.T2H: EntInteraction.H2T,
    EntInteraction.H2V: EntInteraction.V2H,
    EntInteraction.V2H: EntInteraction.H2V,
    EntInteraction.T2V: EntInteraction.V2T,
    EntInteraction.V2T: EntInteraction.T2V,
    EntInteraction.V2V: EntInteraction.V2V,
}

PRIMARY_ANCHORED = frozenset({RelInteraction.H2H, RelInteraction.H2T,
                              RelInteraction.T2H, RelInteraction.T2T})
RELATION_KEY = frozenset({RelInteraction.R2K, RelInteraction.K2R})
SHARED_VALUE = frozenset({RelInteraction.H2V, RelInteraction.V2H,
                          RelInteraction.T2V, RelInteraction.V2T, RelInteraction.V2V})

DEFAULT_RELATION_SET = PRIMARY_ANCHORED | RELATION_KEY
ALL_RELATION_SET = frozenset(RelInteraction)
ALL_ENTITY_SET = frozenset(EntInteraction)
PRIMARY_TO_VALUE = frozenset({EntInteraction.H2V, EntInteraction.V2H,
                              EntInteraction.T2V, EntInteraction.V2T})


def _check_reciprocity_closed(types: frozenset, table: Mapping) -> None:
    for t in types:
        if table[t] not in types:
            raise ConfigError(
                f"interaction set not closed under reciprocity: {t.value} requires "
                f"{table[t].value}")


@dataclass(frozen=True)
class InteractionConfig:
    """The active interaction alphabets for both foundation graphs.

    Both sets must be closed under reciprocity.  Use :func:`preset` for the
    named ablation variants.
    """

    relation_set: frozenset[RelInteraction] = DEFAULT_RELATION_SET
    entity_set: frozenset[EntInteraction] = ALL_ENTITY_SET

    def __post_init__(self):
        _check_reciprocity_closed(self.relation_set, REL_RECIPROCAL)
        _check_reciprocity_closed(self.entity_set, ENT_RECIPROCAL)


PRESETS: dict[str, InteractionConfig] = {
    "default": InteractionConfig(),
    "nor2k": InteractionConfig(relation_set=DEFAULT_RELATION_SET - RELATION_KEY),
    "noprim": InteractionConfig(relation_set=DEFAULT_RELATION_SET - PRIMARY_ANCHORED),
    "addk2k": InteractionConfig(relation_set=DEFAULT_RELATION_SET | {RelInteraction.K2K}),
    "addsharev": InteractionConfig(relation_set=DEFAULT_RELATION_SET | SHARED_VALUE),
    "addallfi": InteractionConfig(relation_set=ALL_RELATION_SET),
    "nov2v": InteractionConfig(entity_set=ALL_ENTITY_SET - {EntInteraction.V2V}),
    "nop2v": InteractionConfig(entity_set=ALL_ENTITY_SET - PRIMARY_TO_VALUE),
    "nov": InteractionConfig(entity_set=frozenset({EntInteraction.H2T, EntInteraction.T2H})),
}

PRESET_NAMES = tuple(PRESETS)


def preset(name: str) -> InteractionConfig:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown interaction preset {name!r}; "
                          f"expected one of {', '.join(PRESET_NAMES)}")


@dataclass(frozen=True)
class FoundationGraph:
    """A typed directed edge set over dense node ids.

    ``edges`` is sorted and duplicate-free, and closed under reciprocity.
    ``edge_relations``, when present, annotates each edge with the dense id
    of the relation that induced it (used by the rewired encoder variant
    that drives entity messages with encoded relation states).
    """

    num_nodes: int
    alphabet: tuple[Enum, ...]
    edges: tuple[tuple[int, Enum, int], ...]
    edge_relations: tuple[int, ...] | None = None
    _arrays: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def edge_set(self) -> frozenset[tuple[int, Enum, int]]:
        return frozenset(self.edges)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(src, type_row, dst) int64 arrays; type_row indexes the alphabet."""
        if "sd" not in self._arrays:
            row = {t: i for i, t in enumerate(self.alphabet)}
            src = np.fromiter((e[0] for e in self.edges), dtype=np.int64, count=len(self.edges))
            trw = np.fromiter((row[e[1]] for e in self.edges), dtype=np.int64,
                              count=len(self.edges))
            dst = np.fromiter((e[2] for e in self.edges), dtype=np.int64, count=len(self.edges))
            self._arrays["sd"] = (src, trw, dst)
        return self._arrays["sd"]

    def relation_array(self) -> np.ndarray:
        if self.edge_relations is None:
            raise ContractError("graph was built without per-edge relation annotations")
        if "er" not in self._arrays:
            self._arrays["er"] = np.asarray(self.edge_relations, dtype=np.int64)
        return self._arrays["er"]


def _finish(num_nodes: int, enum_cls, active: frozenset, edges: set,
            annotated: bool) -> FoundationGraph:
    alphabet = tuple(t for t in enum_cls if t in active)
    order = {t: i for i, t in enumerate(alphabet)}
    if annotated:
        ordered = sorted(edges, key=lambda e: (e[0], order[e[1]], e[2], e[3]))
        return FoundationGraph(num_nodes, alphabet,
                               tuple((s, t, d) for s, t, d, _ in ordered),
                               tuple(r for _, _, _, r in ordered))
    ordered = sorted(edges, key=lambda e: (e[0], order[e[1]], e[2]))
    return FoundationGraph(num_nodes, alphabet, tuple(ordered))


def _check_exclude(kg: Hkg, exclude) -> frozenset[int]:
    excl = frozenset(exclude or ())
    for i in excl:
        if not 0 <= i < kg.num_facts:
            raise ContractError(f"excluded fact index {i} out of range (0..{kg.num_facts - 1})")
    return excl


def _cross_fact_pairs(a_entries: Sequence[tuple[int, int]],
                      b_entries: Sequence[tuple[int, int]],
                      itype: Enum, edges: set) -> None:
    """Emit (node_a, itype, node_b) for entry pairs drawn from distinct facts.

    Entries are (fact_index, node_index).  Works on counts rather than raw
    pairs so hub entities shared by many facts do not cost a quadratic loop:
    an edge exists iff some cross pair (A, B) with A != B realises it, i.e.
    iff total combinations exceed the same-fact combinations.
    """
    cnt_a = Counter(n for _, n in a_entries)
    cnt_b = Counter(n for _, n in b_entries)
    a_by_fact: dict[int, Counter] = defaultdict(Counter)
    for f, n in a_entries:
        a_by_fact[f][n] += 1
    b_by_fact: dict[int, Counter] = defaultdict(Counter)
    for f, n in b_entries:
        b_by_fact[f][n] += 1
    same_fact: Counter = Counter()
    for f in a_by_fact.keys() & b_by_fact.keys():
        for na, ca in a_by_fact[f].items():
            for nb, cb in b_by_fact[f].items():
                same_fact[(na, nb)] += ca * cb
    for na, ca in cnt_a.items():
        for nb, cb in cnt_b.items():
            if ca * cb > same_fact.get((na, nb), 0):
                edges.add((na, itype, nb))


def build_relation_graph(kg: Hkg, cfg: InteractionConfig | None = None,
                         exclude: Iterable[int] | None = None) -> FoundationGraph:
    """Build the relation foundation graph of ``kg`` under ``cfg``.

    ``exclude`` removes facts (by index) from consideration entirely: neither
    their intra-fact edges nor any cross-fact edge requiring them survives.
    Nodes are all relations of the vocabulary regardless of exclusion.
    """
    cfg = cfg or InteractionConfig()
    active = cfg.relation_set
    excl = _check_exclude(kg, exclude)

    rel_of = [kg.relation_index[f.relation] for f in kg.facts]
    heads: dict[int, list[tuple[int, int]]] = defaultdict(list)
    tails: dict[int, list[tuple[int, int]]] = defaultdict(list)
    values: dict[int, list[tuple[int, int]]] = defaultdict(list)
    for fi, f in enumerate(kg.facts):
        if fi in excl:
            continue
        heads[kg.entity_index[f.head]].append((fi, rel_of[fi]))
        tails[kg.entity_index[f.tail]].append((fi, rel_of[fi]))
        for k, v in f.qualifiers:
            values[kg.entity_index[v]].append((fi, kg.relation_index[k]))

    edges: set[tuple[int, RelInteraction, int]] = set()
    anchors = set(heads) | set(tails) | set(values)
    for e in anchors:
        h, t, v = heads.get(e, ()), tails.get(e, ()), values.get(e, ())
        if RelInteraction.H2H in active and h:
            _cross_fact_pairs(h, h, RelInteraction.H2H, edges)
        if RelInteraction.T2T in active and t:
            _cross_fact_pairs(t, t, RelInteraction.T2T, edges)
        if RelInteraction.H2T in active and h and t:
            _cross_fact_pairs(h, t, RelInteraction.H2T, edges)
        if RelInteraction.H2V in active and h and v:
            _cross_fact_pairs(h, v, RelInteraction.H2V, edges)
        if RelInteraction.T2V in active and t and v:
            _cross_fact_pairs(t, v, RelInteraction.T2V, edges)
        if RelInteraction.V2V in active and v:
            _cross_fact_pairs(v, v, RelInteraction.V2V, edges)

    for fi, f in enumerate(kg.facts):
        if fi in excl:
            continue
        r = rel_of[fi]
        keys = [kg.relation_index[k] for k, _ in f.qualifiers]
        if RelInteraction.R2K in active:
            for k in keys:
                edges.add((r, RelInteraction.R2K, k))
        if RelInteraction.K2K in active:
            for i, ki in enumerate(keys):
                for j, kj in enumerate(keys):
                    if i != j:
                        edges.add((ki, RelInteraction.K2K, kj))

    for s, t, d in list(edges):
        edges.add((d, REL_RECIPROCAL[t], s))
    return _finish(kg.num_relations, RelInteraction, active, edges, annotated=False)


def build_entity_graph(kg: Hkg, cfg: InteractionConfig | None = None,
                       exclude: Iterable[int] | None = None,
                       with_fact_relations: bool = False) -> FoundationGraph:
    """Build the entity foundation graph of ``kg`` under ``cfg``.

    All edges are intra-fact.  When two positions of a fact hold the same
    entity the degenerate loop (e, t, e) is kept once.  With
    ``with_fact_relations`` each edge additionally carries the dense id of
    its governing relation (the primary relation for head/tail edges, the
    qualifier key on the source side for value edges); deduplication then
    distinguishes edges with different annotations.
    """
    cfg = cfg or InteractionConfig()
    active = cfg.entity_set
    excl = _check_exclude(kg, exclude)

    edges: set = set()

    def put(src: int, itype: EntInteraction, dst: int, rel: int) -> None:
        if itype not in active:
            return
        if with_fact_relations:
            edges.add((src, itype, dst, rel))
        else:
            edges.add((src, itype, dst))

    for fi, f in enumerate(kg.facts):
        if fi in excl:
            continue
        h = kg.entity_index[f.head]
        t = kg.entity_index[f.tail]
        r = kg.relation_index[f.relation]
        vals = [(kg.relation_index[k], kg.entity_index[v]) for k, v in f.qualifiers]
        put(h, EntInteraction.H2T, t, r)
        put(t, EntInteraction.T2H, h, r)
        for k, v in vals:
            put(h, EntInteraction.H2V, v, k)
            put(v, EntInteraction.V2H, h, k)
            put(t, EntInteraction.T2V, v, k)
            put(v, EntInteraction.V2T, t, k)
        for i, (ki, vi) in enumerate(vals):
            for j, (kj, vj) in enumerate(vals):
                if i != j:
                    put(vi, EntInteraction.V2V, vj, ki)

    if not with_fact_relations:
        for s, t, d in list(edges):
            edges.add((d, ENT_RECIPROCAL[t], s))
    return _finish(kg.num_entities, EntInteraction, active, edges,
                   annotated=with_fact_relations)


@dataclass
class GraphStats:
    num_nodes: int
    num_edges: int
    type_counts: dict[str, int]
    degree_histogram: dict[int, int]

    def lines(self) -> list[str]:
        out = [f"nodes: {self.num_nodes}", f"edges: {self.num_edges}"]
        for name, count in self.type_counts.items():
            out.append(f"  {name}: {count}")
        out.append("out-degree histogram:")
        for deg in sorted(self.degree_histogram):
            out.append(f"  degree {deg}: {self.degree_histogram[deg]} node(s)")
        return out


def graph_stats(g: FoundationGraph) -> GraphStats:
    """Exact per-type edge counts and the out-degree histogram of ``g``."""
    type_counts = {t.value: 0 for t in g.alphabet}
    out_degree = Counter()
    for s, t, _ in g.edges:
        type_counts[t.value] += 1
        out_degree[s] += 1
    hist = Counter(out_degree.get(n, 0) for n in range(g.num_nodes))
    return GraphStats(g.num_nodes, g.num_edges, type_counts, dict(hist))


def export_edge_list(g: FoundationGraph, names: Sequence[str]) -> list[str]:
    """Edge list as ``src TAB type-name TAB dst`` lines, using node names."""
    return [f"{names[s]}\t{t.value}\t{names[d]}" for s, t, d in g.edges]
