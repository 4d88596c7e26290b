"""Core domain types for hyper-relational knowledge graphs.

A fact is a primary triplet (head, relation, tail) plus an ordered list of
qualifier pairs (key, value).  Keys are relation ids, values are entity ids.
Qualifier order is preserved exactly as ingested because downstream sequence
positions depend on it.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .errors import ContractError


class RoleKind(Enum):
    HEAD = "head"
    PRIMARY_RELATION = "relation"
    TAIL = "tail"
    KEY = "key"
    VALUE = "value"


@dataclass(frozen=True)
class Role:
    """A semantic position inside one fact.

    KEY and VALUE carry the zero-based index of the qualifier they refer to;
    the other kinds take no index.
    """

    kind: RoleKind
    index: int | None = None

    def __post_init__(self):
        if self.kind in (RoleKind.KEY, RoleKind.VALUE):
            if self.index is None or self.index < 0:
                raise ContractError(f"{self.kind.value} role requires a qualifier index >= 0")
        elif self.index is not None:
            raise ContractError(f"{self.kind.value} role takes no qualifier index")

    @property
    def is_entity(self) -> bool:
        return self.kind in (RoleKind.HEAD, RoleKind.TAIL, RoleKind.VALUE)

    def __repr__(self):
        if self.index is None:
            return self.kind.value
        return f"{self.kind.value}({self.index})"


HEAD = Role(RoleKind.HEAD)
PRIMARY_RELATION = Role(RoleKind.PRIMARY_RELATION)
TAIL = Role(RoleKind.TAIL)


def key_role(i: int) -> Role:
    return Role(RoleKind.KEY, i)


def value_role(i: int) -> Role:
    return Role(RoleKind.VALUE, i)


@dataclass(frozen=True)
class HyperFact:
    """One hyper-relational fact. ``qualifiers`` is an ordered tuple of (key, value)."""

    head: str
    relation: str
    tail: str
    qualifiers: tuple[tuple[str, str], ...] = ()

    @classmethod
    def of(cls, head: str, relation: str, tail: str,
           qualifiers: Iterable[tuple[str, str]] = ()) -> "HyperFact":
        return cls(head, relation, tail, tuple((k, v) for k, v in qualifiers))

    @property
    def arity(self) -> int:
        """Number of qualifier pairs."""
        return len(self.qualifiers)

    def entities(self) -> tuple[str, ...]:
        return (self.head, self.tail) + tuple(v for _, v in self.qualifiers)

    def relations(self) -> tuple[str, ...]:
        return (self.relation,) + tuple(k for k, _ in self.qualifiers)

    def entity_roles(self) -> list[tuple[Role, str]]:
        """All entity positions of this fact in canonical order."""
        out = [(HEAD, self.head), (TAIL, self.tail)]
        out.extend((value_role(i), v) for i, (_, v) in enumerate(self.qualifiers))
        return out

    def relation_roles(self) -> list[tuple[Role, str]]:
        out = [(PRIMARY_RELATION, self.relation)]
        out.extend((key_role(i), k) for i, (k, _) in enumerate(self.qualifiers))
        return out

    def entity_at(self, role: Role) -> str:
        if role.kind is RoleKind.HEAD:
            return self.head
        if role.kind is RoleKind.TAIL:
            return self.tail
        if role.kind is RoleKind.VALUE:
            if role.index >= self.arity:
                raise ContractError(f"{role!r} out of range for arity {self.arity}")
            return self.qualifiers[role.index][1]
        raise ContractError(f"{role!r} is not an entity position")

    def replace_entity(self, role: Role, entity: str) -> "HyperFact":
        """A copy of this fact with the entity at ``role`` substituted."""
        if role.kind is RoleKind.HEAD:
            return HyperFact(entity, self.relation, self.tail, self.qualifiers)
        if role.kind is RoleKind.TAIL:
            return HyperFact(self.head, self.relation, entity, self.qualifiers)
        if role.kind is RoleKind.VALUE:
            if role.index >= self.arity:
                raise ContractError(f"{role!r} out of range for arity {self.arity}")
            quals = list(self.qualifiers)
            quals[role.index] = (quals[role.index][0], entity)
            return HyperFact(self.head, self.relation, self.tail, tuple(quals))
        raise ContractError(f"{role!r} is not an entity position")


@dataclass(frozen=True)
class Violation:
    """One validation finding: which fact, which position, what went wrong."""

    fact_index: int | None
    role: Role | None
    message: str

    def __str__(self):
        where = [] if self.fact_index is None else [f"fact {self.fact_index}"]
        if self.role is not None:
            where.append(repr(self.role))
        prefix = ", ".join(where)
        return f"{prefix}: {self.message}" if prefix else self.message


class Hkg:
    """An immutable hyper-relational KG with dense id maps and occurrence indices.

    Vocabularies default to first-seen order over the fact list, which makes
    construction deterministic and file round-trips stable.  Explicit
    vocabularies may be supplied instead (e.g. to represent a graph whose
    declared vocabulary disagrees with its facts); ``validate`` reports any
    resulting inconsistency.
    """

    __slots__ = ("facts", "entities", "relations", "entity_index", "relation_index",
                 "entity_occurrences", "relation_occurrences")

    def __init__(self, facts: Iterable[HyperFact],
                 entities: Sequence[str] | None = None,
                 relations: Sequence[str] | None = None):
        self.facts: tuple[HyperFact, ...] = tuple(facts)
        if entities is None or relations is None:
            seen_e, seen_r = _first_seen_vocab(self.facts)
            entities = seen_e if entities is None else entities
            relations = seen_r if relations is None else relations
        self.entities: tuple[str, ...] = tuple(entities)
        self.relations: tuple[str, ...] = tuple(relations)
        self.entity_index: dict[str, int] = {e: i for i, e in enumerate(self.entities)}
        self.relation_index: dict[str, int] = {r: i for i, r in enumerate(self.relations)}
        self.entity_occurrences, self.relation_occurrences = _build_occurrences(
            self.facts, self.entity_index, self.relation_index)

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    @property
    def num_facts(self) -> int:
        return len(self.facts)

    def fact_keys(self) -> set[HyperFact]:
        """Set view of the facts (duplicates collapse)."""
        return set(self.facts)

    def __eq__(self, other):
        if not isinstance(other, Hkg):
            return NotImplemented
        return (self.facts == other.facts and self.entities == other.entities
                and self.relations == other.relations)

    def __hash__(self):
        return hash((self.facts, self.entities, self.relations))

    def __repr__(self):
        return (f"Hkg({self.num_facts} facts, {self.num_entities} entities, "
                f"{self.num_relations} relations)")


def _first_seen_vocab(facts: Sequence[HyperFact]) -> tuple[list[str], list[str]]:
    ents: dict[str, None] = {}
    rels: dict[str, None] = {}
    for f in facts:
        ents.setdefault(f.head)
        rels.setdefault(f.relation)
        ents.setdefault(f.tail)
        for k, v in f.qualifiers:
            rels.setdefault(k)
            ents.setdefault(v)
    return list(ents), list(rels)


def _build_occurrences(facts, entity_index, relation_index):
    ent_occ: list[list[tuple[int, Role]]] = [[] for _ in entity_index]
    rel_occ: list[list[tuple[int, Role]]] = [[] for _ in relation_index]
    for fi, f in enumerate(facts):
        for role, e in f.entity_roles():
            idx = entity_index.get(e)
            if idx is not None:
                ent_occ[idx].append((fi, role))
        for role, r in f.relation_roles():
            idx = relation_index.get(r)
            if idx is not None:
                rel_occ[idx].append((fi, role))
    return ([tuple(o) for o in ent_occ], [tuple(o) for o in rel_occ])


def validate(kg: Hkg) -> list[Violation]:
    """Check the structural invariants of ``kg``.

    Returns an empty list when the graph is consistent; otherwise one
    ``Violation`` per finding.  Violations are data, not failures, and the
    check never mutates the graph.
    """
    out: list[Violation] = []
    referenced_e: set[str] = set()
    referenced_r: set[str] = set()
    for fi, f in enumerate(kg.facts):
        for role, e in f.entity_roles():
            referenced_e.add(e)
            if e not in kg.entity_index:
                out.append(Violation(fi, role, f"entity {e!r} missing from vocabulary"))
        for role, r in f.relation_roles():
            referenced_r.add(r)
            if r not in kg.relation_index:
                out.append(Violation(fi, role, f"relation {r!r} missing from vocabulary"))
    for e in kg.entities:
        if e not in referenced_e:
            out.append(Violation(None, None, f"orphan vocabulary entity {e!r}"))
    for r in kg.relations:
        if r not in referenced_r:
            out.append(Violation(None, None, f"orphan vocabulary relation {r!r}"))
    rebuilt_e, rebuilt_r = _build_occurrences(kg.facts, kg.entity_index, kg.relation_index)
    if rebuilt_e != kg.entity_occurrences or rebuilt_r != kg.relation_occurrences:
        out.append(Violation(None, None, "occurrence indices inconsistent with facts"))
    return out


@dataclass(frozen=True)
class QueryFact:
    """A fact with exactly one entity position masked.

    The masked slot's entity in ``base`` is a placeholder and is never read;
    ``answer`` carries the ground truth when known (training/evaluation) and
    is ``None`` for ad-hoc prediction.
    """

    base: HyperFact
    masked: Role
    answer: str | None = None

    def __post_init__(self):
        if not self.masked.is_entity:
            raise ContractError(f"cannot mask {self.masked!r}: not an entity position")
        if self.masked.kind is RoleKind.VALUE and self.masked.index >= self.base.arity:
            raise ContractError(
                f"masked {self.masked!r} out of range for arity {self.base.arity}")
        if self.answer is not None and self.base.entity_at(self.masked) != self.answer:
            raise ContractError(
                f"answer {self.answer!r} disagrees with entity at {self.masked!r}")

    @classmethod
    def from_fact(cls, fact: HyperFact, masked: Role) -> "QueryFact":
        """Mask ``masked`` in a complete fact; the answer is read off the fact."""
        return cls(fact, masked, fact.entity_at(masked))

    def unmasked_entities(self) -> list[str]:
        """Entities visible to the encoders (every entity slot except the mask)."""
        return [e for role, e in self.base.entity_roles() if role != self.masked]

    @property
    def is_head_or_tail(self) -> bool:
        return self.masked.kind in (RoleKind.HEAD, RoleKind.TAIL)


def queries_from_facts(facts: Iterable[HyperFact]) -> list[QueryFact]:
    """One query per entity position of every fact.

    Order is deterministic: fact order, then Head, Tail, Value(0..n-1), so a
    fact with n qualifiers contributes exactly 2 + n queries.
    """
    out: list[QueryFact] = []
    for f in facts:
        out.append(QueryFact.from_fact(f, HEAD))
        out.append(QueryFact.from_fact(f, TAIL))
        for i in range(f.arity):
            out.append(QueryFact.from_fact(f, value_role(i)))
    return out


def generate_queries(kg: Hkg) -> list[QueryFact]:
    """All link-prediction queries derivable from ``kg``'s facts."""
    return queries_from_facts(kg.facts)
