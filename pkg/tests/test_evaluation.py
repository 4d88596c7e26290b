import numpy as np
import pytest

from hyrel import ContractError, HEAD, TAIL, Hkg, HyperFact, QueryFact
from hyrel.evaluation import (Metrics, completion_index, evaluate, filter_set,
                              rank_of)
from hyrel.model import queries_from_facts
from hyrel.reference import uniform_model_mrr


class UniformModel:
    def prepare(self, kg):
        return kg

    def entity_scores(self, kg, query):
        return np.full(kg.num_entities, 1.0 / kg.num_entities)


class OracleModel:
    def prepare(self, kg):
        return kg

    def entity_scores(self, kg, query):
        scores = np.zeros(kg.num_entities)
        scores[kg.entity_index[query.answer]] = 1.0
        return scores


def test_rank_hand_fixtures():
    assert rank_of(np.array([0.5, 0.3, 0.2]), 1) == 2.0
    assert 1.0 / rank_of(np.array([0.5, 0.3, 0.2]), 1) == 0.5
    assert rank_of(np.array([0.4, 0.4, 0.2]), 0) == 1.5
    assert rank_of(np.array([0.9, 0.05, 0.05]), 0, {1}) == 1.0


def test_rank_top_answer_is_one_regardless_of_filter():
    scores = np.array([0.1, 0.7, 0.2])
    assert rank_of(scores, 1) == 1.0
    assert rank_of(scores, 1, {0}) == 1.0


def test_rank_rejects_filtered_answer():
    with pytest.raises(ContractError):
        rank_of(np.array([0.5, 0.5]), 0, {0})


def test_rank_rejects_out_of_range_answer():
    with pytest.raises(ContractError):
        rank_of(np.array([0.5, 0.5]), 5)


def test_filtering_removes_known_completions():
    facts = [HyperFact("a", "r", "b"), HyperFact("a", "r", "c")]
    kg = Hkg(facts)
    index = completion_index(facts)
    query = QueryFact.from_fact(facts[0], TAIL)  # (a, r, MASK), answer b
    out = filter_set(query, kg, index)
    assert out == {kg.entity_index["c"]}

    # With c filtered, b competes only against a.
    scores = np.zeros(kg.num_entities)
    scores[kg.entity_index["c"]] = 0.9
    scores[kg.entity_index["b"]] = 0.5
    scores[kg.entity_index["a"]] = 0.1
    assert rank_of(scores, kg.entity_index["b"], out) == 1.0
    assert rank_of(scores, kg.entity_index["b"]) == 2.0


def test_filtered_rr_never_lower_than_raw(rng):
    for _ in range(200):
        n = int(rng.integers(2, 30))
        scores = rng.normal(size=n)
        answer = int(rng.integers(n))
        candidates = [i for i in range(n) if i != answer]
        rng.shuffle(candidates)
        filtered = set(candidates[:int(rng.integers(0, n - 1))])
        raw_rank = rank_of(scores, answer)
        filt_rank = rank_of(scores, answer, filtered)
        assert 1.0 / filt_rank >= 1.0 / raw_rank - 1e-12


def test_oracle_model_scores_perfect_mrr():
    facts = [HyperFact("a", "r", "b", (("k", "c"),)), HyperFact("b", "r", "c")]
    kg = Hkg(facts)
    queries = queries_from_facts(facts)
    metrics = evaluate(OracleModel(), kg, queries, facts)
    assert metrics.mrr_ht == 1.0
    assert metrics.mrr_all == 1.0
    assert metrics.hits_all[1] == 1.0
    assert metrics.count_all == 5
    assert metrics.count_ht == 4


def test_uniform_model_matches_closed_form():
    facts = [HyperFact("a", "r", "b", (("k", "c"),)),
             HyperFact("a", "r", "c"),
             HyperFact("d", "s", "e")]
    kg = Hkg(facts)
    queries = queries_from_facts(facts)
    index = completion_index(facts)
    filter_sizes = [len(filter_set(q, kg, index)) for q in queries]
    expected = uniform_model_mrr(kg.num_entities, filter_sizes)
    metrics = evaluate(UniformModel(), kg, queries, facts)
    assert abs(metrics.mrr_all - expected) < 1e-9

    ht_sizes = [s for q, s in zip(queries, filter_sizes) if q.is_head_or_tail]
    assert abs(metrics.mrr_ht - uniform_model_mrr(kg.num_entities, ht_sizes)) < 1e-9


def test_breakdowns_split_head_tail_from_values():
    facts = [HyperFact("a", "r", "b", (("k", "c"),))]
    kg = Hkg(facts)
    queries = queries_from_facts(facts)

    class ValueOnlyOracle(OracleModel):
        def entity_scores(self, kg_, query):
            if query.is_head_or_tail:
                return np.full(kg_.num_entities, 0.5)
            return super().entity_scores(kg_, query)

    metrics = evaluate(ValueOnlyOracle(), kg, queries, facts)
    assert metrics.count_ht == 2 and metrics.count_all == 3
    assert metrics.mrr_ht < 1.0
    assert metrics.hits_all[1] < 1.0


def test_evaluate_requires_answers(small_kg):
    query = QueryFact(small_kg.facts[0], HEAD, None)
    with pytest.raises(ContractError):
        evaluate(UniformModel(), small_kg, [query], small_kg.facts)


def test_threaded_evaluation_matches_serial(small_kg):
    queries = queries_from_facts(small_kg.facts)
    serial = evaluate(UniformModel(), small_kg, queries, small_kg.facts, threads=1)
    threaded = evaluate(UniformModel(), small_kg, queries, small_kg.facts, threads=4)
    assert serial == threaded


def test_raw_mode_skips_filtering():
    facts = [HyperFact("a", "r", "b"), HyperFact("a", "r", "c")]
    kg = Hkg(facts)
    query = QueryFact.from_fact(facts[0], TAIL)

    class FixedModel:
        def prepare(self, kg_):
            return kg_

        def entity_scores(self, kg_, q):
            scores = np.zeros(kg_.num_entities)
            scores[kg_.entity_index["c"]] = 0.9
            scores[kg_.entity_index["b"]] = 0.5
            return scores

    filtered = evaluate(FixedModel(), kg, [query], facts, filtered=True)
    raw = evaluate(FixedModel(), kg, [query], facts, filtered=False)
    assert filtered.mrr_all == 1.0
    assert raw.mrr_all == 0.5


def test_metrics_output_formats():
    metrics = Metrics(0.5, 0.25, {1: 0.1, 3: 0.3, 10: 0.9},
                      {1: 0.05, 3: 0.2, 10: 0.8}, 4, 8)
    table = metrics.table()
    assert "mrr" in table and "hits@10" in table
    lines = metrics.tsv_lines()
    assert "mrr\tH/T\t0.500000" in lines
    assert "queries\tALL\t8" in lines


def test_metric_permutation_invariance(rng):
    from hyrel.predictor import LinkPredictor, ModelConfig
    from hyrel.reference import permute_hkg, random_hkg

    kg = random_hkg(rng, max_facts=5, min_facts=3)
    queries = queries_from_facts(kg.facts)
    predictor = LinkPredictor.build(ModelConfig(width=8, encoder_depth=2,
                                                head_count=1, decoder_depth=1),
                                    seed=2, dtype=np.float64)
    base = evaluate(predictor, kg, queries, kg.facts)

    pkg, phi, tau = permute_hkg(kg, rng)
    pqueries = []
    for q in queries:
        pbase = HyperFact(phi[q.base.head], tau[q.base.relation], phi[q.base.tail],
                          tuple((tau[k], phi[v]) for k, v in q.base.qualifiers))
        pqueries.append(QueryFact(pbase, q.masked, phi[q.answer]))
    permuted = evaluate(predictor, pkg, pqueries, pkg.facts)
    assert abs(base.mrr_all - permuted.mrr_all) < 1e-9
    assert abs(base.mrr_ht - permuted.mrr_ht) < 1e-9
    assert base.hits_all == permuted.hits_all
