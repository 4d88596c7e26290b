"""Built-in verification suites behind the ``selfcheck`` subcommand.

Three suites: finite-difference gradient checks over a small 64-bit model,
foundation-graph equivalence against the brute-force reference enumerators,
and permutation equivariance of the end-to-end scores.  All of them also
run (more thoroughly) in the test suite; this entry point exists so an
installed build can be verified without a test harness.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import autodiff as ad
from .evaluation import rank_of
from .foundation import PRESETS, build_entity_graph, build_relation_graph
from .model import generate_queries
from .predictor import LinkPredictor, ModelConfig
from .reference import (brute_force_entity_edges, brute_force_relation_edges,
                        permute_hkg, random_hkg)
from .training import query_loss


def _gradient_suite(log: Callable[[str], None], quick: bool) -> bool:
    rng = np.random.default_rng(7)
    kg = random_hkg(rng, max_facts=3, min_facts=3, max_qualifiers=2)
    queries = generate_queries(kg)
    cfg = ModelConfig(width=8, encoder_depth=2, head_count=1, decoder_depth=1)
    predictor = LinkPredictor.build(cfg, seed=3, dtype=np.float64)
    graphs = predictor.build_graphs(kg)

    def loss():
        return query_loss(predictor, kg, queries[0], graphs)

    params = dict(predictor.store.items())
    if quick:
        names = sorted(params)[:: max(1, len(params) // 8)]
        params = {n: params[n] for n in names}
    report = ad.check_gradients(loss, params, h=1e-4, rtol=1e-3)
    worst = max(report.values()) if report else 0.0
    ok = worst <= 1e-3
    log(f"{'ok' if ok else 'FAIL'} - gradients vs finite differences "
        f"(max rel err {worst:.2e} over {len(report)} tensors)")
    return ok


def _foundation_suite(log: Callable[[str], None], quick: bool) -> bool:
    rng = np.random.default_rng(11)
    cases = 20 if quick else 100
    failures = 0
    for _ in range(cases):
        kg = random_hkg(rng)
        for cfg in PRESETS.values():
            built = build_relation_graph(kg, cfg).edge_set()
            if built != brute_force_relation_edges(kg, cfg):
                failures += 1
            built = build_entity_graph(kg, cfg).edge_set()
            if built != brute_force_entity_edges(kg, cfg):
                failures += 1
    ok = failures == 0
    log(f"{'ok' if ok else 'FAIL'} - foundation graphs vs brute-force rules "
        f"({cases} graphs x {len(PRESETS)} presets, {failures} mismatches)")
    return ok


def _equivariance_suite(log: Callable[[str], None], quick: bool) -> bool:
    rng = np.random.default_rng(13)
    cases = 3 if quick else 8
    cfg = ModelConfig(width=16, encoder_depth=2, head_count=2, decoder_depth=1)
    predictor = LinkPredictor.build(cfg, seed=5)
    worst = 0.0
    rank_mismatch = 0
    for _ in range(cases):
        kg = random_hkg(rng, max_facts=6, min_facts=2)
        queries = generate_queries(kg)
        query = queries[int(rng.integers(len(queries)))]
        scores = predictor.entity_scores(predictor.prepare(kg), query)
        pkg, phi, tau = permute_hkg(kg, rng)
        pquery = [q for q in generate_queries(pkg)
                  if q.base == _apply(phi, tau, query.base) and q.masked == query.masked]
        pscores = predictor.entity_scores(predictor.prepare(pkg), pquery[0])
        for name, idx in kg.entity_index.items():
            drift = abs(scores[idx] - pscores[pkg.entity_index[phi[name]]])
            worst = max(worst, float(drift))
        a = rank_of(scores, kg.entity_index[query.answer])
        b = rank_of(pscores, pkg.entity_index[phi[query.answer]])
        if a != b:
            rank_mismatch += 1
    ok = worst <= 1e-4 and rank_mismatch == 0
    log(f"{'ok' if ok else 'FAIL'} - score equivariance under relabeling "
        f"({cases} cases, max drift {worst:.2e}, {rank_mismatch} rank changes)")
    return ok


def _apply(phi, tau, fact):
    from .model import HyperFact
    return HyperFact(phi[fact.head], tau[fact.relation], phi[fact.tail],
                     tuple((tau[k], phi[v]) for k, v in fact.qualifiers))


def run_selfcheck(quick: bool = False, log: Callable[[str], None] = print) -> bool:
    results = [
        _foundation_suite(log, quick),
        _gradient_suite(log, quick),
        _equivariance_suite(log, quick),
    ]
    ok = all(results)
    log(f"selfcheck: {'all suites passed' if ok else 'FAILURES detected'}")
    return ok
