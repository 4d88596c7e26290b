"""Ranking evaluation: filtered mean reciprocal rank and hits@K.

Ranks use the mean-tie convention: the answer's rank is one plus the number
of strictly better competitors plus half the number of equal-scoring ones.
Filtered mode removes from the competitor set every entity that would
complete the query to a fact already known to be true, so a model is not
punished for preferring a different correct answer.

Metrics are reported twice: over head/tail queries only ("H/T") and over
all query positions including qualifier values ("ALL").  Both breakdowns
come from the same ranked lists.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np

from .errors import ContractError, VocabularyError
from .model import Hkg, HyperFact, QueryFact

HITS_KS = (1, 3, 10)


class ScoringModel(Protocol):
    def prepare(self, kg: Hkg): ...

    def entity_scores(self, ctx, query: QueryFact) -> np.ndarray: ...


def rank_of(scores: np.ndarray, answer: int, filter_out: Iterable[int] = ()) -> float:
    """Mean-tie rank of ``answer`` among the non-filtered candidates."""
    scores = np.asarray(scores).reshape(-1)
    filtered = set(filter_out)
    if answer in filtered:
        raise ContractError("the answer itself may not be filtered out")
    if not 0 <= answer < scores.size:
        raise ContractError(f"answer index {answer} out of range for {scores.size} scores")
    mask = np.ones(scores.size, dtype=bool)
    if filtered:
        mask[list(filtered)] = False
    mask[answer] = False
    competitors = scores[mask]
    target = scores[answer]
    better = int((competitors > target).sum())
    ties = int((competitors == target).sum())
    return 1.0 + better + ties / 2.0


@dataclass
class Metrics:
    """MRR and hits@K with the head/tail vs all-positions breakdown."""

    mrr_ht: float
    mrr_all: float
    hits_ht: dict[int, float]
    hits_all: dict[int, float]
    count_ht: int
    count_all: int

    def table(self) -> str:
        ks = sorted(self.hits_all)
        header = f"{'metric':<10}{'H/T':>12}{'ALL':>12}"
        rows = [header, "-" * len(header),
                f"{'queries':<10}{self.count_ht:>12}{self.count_all:>12}",
                f"{'mrr':<10}{self.mrr_ht:>12.4f}{self.mrr_all:>12.4f}"]
        for k in ks:
            rows.append(f"{f'hits@{k}':<10}{self.hits_ht[k]:>12.4f}{self.hits_all[k]:>12.4f}")
        return "\n".join(rows)

    def tsv_lines(self) -> list[str]:
        lines = [f"mrr\tH/T\t{self.mrr_ht:.6f}", f"mrr\tALL\t{self.mrr_all:.6f}"]
        for k in sorted(self.hits_ht):
            lines.append(f"hits@{k}\tH/T\t{self.hits_ht[k]:.6f}")
        for k in sorted(self.hits_all):
            lines.append(f"hits@{k}\tALL\t{self.hits_all[k]:.6f}")
        lines.append(f"queries\tH/T\t{self.count_ht}")
        lines.append(f"queries\tALL\t{self.count_all}")
        return lines


def _aggregate(ranks: Sequence[float], ht_flags: Sequence[bool],
               ks: Sequence[int]) -> Metrics:
    ranks = np.asarray(ranks, dtype=np.float64)
    ht = np.asarray(ht_flags, dtype=bool)

    def summarize(sel: np.ndarray) -> tuple[float, dict[int, float], int]:
        if sel.size == 0:
            return 0.0, {k: 0.0 for k in ks}, 0
        mrr = float((1.0 / sel).mean())
        hits = {k: float((sel <= k).mean()) for k in ks}
        return mrr, hits, int(sel.size)

    mrr_ht, hits_ht, n_ht = summarize(ranks[ht])
    mrr_all, hits_all, n_all = summarize(ranks)
    return Metrics(mrr_ht, mrr_all, hits_ht, hits_all, n_ht, n_all)


def completion_index(known_facts: Iterable[HyperFact]) -> dict:
    """Map (fact with one entity slot blanked, role) to the entities filling it."""
    index: dict[tuple, set[str]] = {}
    for fact in known_facts:
        for role, entity in fact.entity_roles():
            key = (fact.replace_entity(role, ""), role)
            index.setdefault(key, set()).add(entity)
    return index


def filter_set(query: QueryFact, kg: Hkg, index: dict) -> set[int]:
    """Dense ids of the known alternative answers for ``query`` (answer excluded)."""
    key = (query.base.replace_entity(query.masked, ""), query.masked)
    others = index.get(key, set()) - {query.answer}
    return {kg.entity_index[e] for e in others if e in kg.entity_index}


def bundle_known_facts(bundle) -> list[HyperFact]:
    """The standard filter population: inference plus valid plus test facts."""
    return list(bundle.inference.facts) + list(bundle.valid) + list(bundle.test)


def evaluate_bundle(model: ScoringModel, bundle, split: str = "test",
                    filtered: bool = True, threads: int = 1) -> Metrics:
    """Evaluate one split of a bundle under the standard protocol."""
    from .model import queries_from_facts
    facts = bundle.valid if split == "valid" else bundle.test
    return evaluate(model, bundle.inference, queries_from_facts(facts),
                    bundle_known_facts(bundle), filtered=filtered, threads=threads)


def evaluate(model: ScoringModel, kg_inf: Hkg, queries: Sequence[QueryFact],
             known_facts: Iterable[HyperFact], filtered: bool = True,
             threads: int = 1, ks: Sequence[int] = HITS_KS) -> Metrics:
    """Score every query against all entities of ``kg_inf`` and aggregate.

    ``known_facts`` feeds the filter; pass the union of the inference, valid
    and test facts for the standard protocol.  Queries must carry answers.
    """
    for q in queries:
        if q.answer is None:
            raise ContractError("evaluation queries must carry their answer")
    ctx = model.prepare(kg_inf)
    index = completion_index(known_facts) if filtered else {}

    def rank_one(query: QueryFact) -> float:
        scores = model.entity_scores(ctx, query)
        answer_idx = kg_inf.entity_index.get(query.answer)
        if answer_idx is None:
            raise VocabularyError(f"answer {query.answer!r} not in the graph vocabulary")
        out = filter_set(query, kg_inf, index) if filtered else set()
        return rank_of(scores, answer_idx, out)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            ranks = list(pool.map(rank_one, queries))
    else:
        ranks = [rank_one(q) for q in queries]
    return _aggregate(ranks, [q.is_head_or_tail for q in queries], ks)
