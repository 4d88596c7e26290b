import pytest

from hyrel import ConfigError, Hkg, HyperFact
from hyrel.foundation import (PRESETS,
                              EntInteraction, InteractionConfig, RelInteraction,
                              build_entity_graph, build_relation_graph,
                              export_edge_list, graph_stats, preset,
                              ENT_RECIPROCAL, REL_RECIPROCAL)
from hyrel.reference import (brute_force_entity_edges, brute_force_relation_edges,
                             permute_hkg, random_hkg)

E = EntInteraction
R = RelInteraction


def test_single_fact_default_relation_graph():
    kg = Hkg([HyperFact("h", "r", "t", (("k1", "v1"), ("k2", "v2")))])
    g = build_relation_graph(kg)
    r, k1, k2 = (kg.relation_index[x] for x in ("r", "k1", "k2"))
    assert g.edge_set() == {(r, R.R2K, k1), (k1, R.K2R, r), (r, R.R2K, k2), (k2, R.K2R, r)}
    counts = graph_stats(g).type_counts
    assert counts["r2k_r"] == 2 and counts["k2r_r"] == 2
    assert sum(counts.values()) == g.num_edges


def test_two_triples_sharing_head():
    kg = Hkg([HyperFact("x", "r1", "a"), HyperFact("x", "r2", "b")])
    g = build_relation_graph(kg)
    r1, r2 = kg.relation_index["r1"], kg.relation_index["r2"]
    assert g.edge_set() == {(r1, R.H2H, r2), (r2, R.H2H, r1)}


def test_shared_value_interaction():
    # Fact 1 carries a qualifier whose value is fact 5's head entity.
    fact1 = HyperFact("h1", "r1", "t1", (("k1", "v1"), ("k2", "v2")))
    fact5 = HyperFact("v2", "r5", "t5")
    kg = Hkg([fact1, fact5])
    g = build_relation_graph(kg, preset("addShareV"))
    r5, k2 = kg.relation_index["r5"], kg.relation_index["k2"]
    assert (r5, R.H2V, k2) in g.edge_set()
    assert (k2, R.V2H, r5) in g.edge_set()
    default = build_relation_graph(kg).edge_set()
    assert default <= g.edge_set()
    assert not any(t in (R.H2V, R.V2H, R.T2V, R.V2T, R.V2V) for _, t, _ in default)


def test_self_relation_edge_needs_two_facts():
    # Same relation in two distinct facts sharing a head makes a self edge;
    # a single fact whose head equals its tail must not.
    kg = Hkg([HyperFact("x", "r", "a"), HyperFact("x", "r", "b")])
    g = build_relation_graph(kg)
    r = kg.relation_index["r"]
    assert (r, R.H2H, r) in g.edge_set()

    loop_kg = Hkg([HyperFact("x", "r", "x")])
    g2 = build_relation_graph(loop_kg)
    assert g2.num_edges == 0


def test_single_triple_entity_graph():
    kg = Hkg([HyperFact("h", "r", "t")])
    g = build_entity_graph(kg)
    h, t = kg.entity_index["h"], kg.entity_index["t"]
    assert g.edge_set() == {(h, E.H2T, t), (t, E.T2H, h)}


def test_two_qualifier_entity_graph_has_twelve_edges():
    kg = Hkg([HyperFact("h", "r", "t", (("k1", "v1"), ("k2", "v2")))])
    g = build_entity_graph(kg)
    h, t, v1, v2 = (kg.entity_index[x] for x in ("h", "t", "v1", "v2"))
    expected = {
        (h, E.H2T, t), (t, E.T2H, h),
        (h, E.H2V, v1), (v1, E.V2H, h), (h, E.H2V, v2), (v2, E.V2H, h),
        (t, E.T2V, v1), (v1, E.V2T, t), (t, E.T2V, v2), (v2, E.V2T, t),
        (v1, E.V2V, v2), (v2, E.V2V, v1),
    }
    assert g.edge_set() == expected
    counts = graph_stats(g).type_counts
    assert counts == {"h2t_e": 1, "t2h_e": 1, "h2v_e": 2, "v2h_e": 2,
                      "t2v_e": 2, "v2t_e": 2, "v2v_e": 2}


def test_nov_preset_keeps_only_primary_pair():
    kg = Hkg([HyperFact("h", "r", "t", (("k1", "v1"), ("k2", "v2")))])
    g = build_entity_graph(kg, preset("noV"))
    h, t = kg.entity_index["h"], kg.entity_index["t"]
    assert g.edge_set() == {(h, E.H2T, t), (t, E.T2H, h)}


def test_degenerate_loops_kept_once():
    kg = Hkg([HyperFact("x", "r", "x", (("k", "x"),))])
    g = build_entity_graph(kg)
    x = kg.entity_index["x"]
    assert g.edge_set() == {(x, E.H2T, x), (x, E.T2H, x), (x, E.H2V, x),
                            (x, E.V2H, x), (x, E.T2V, x), (x, E.V2T, x)}


def test_empty_graph_stats():
    g = build_entity_graph(Hkg([]))
    stats = graph_stats(g)
    assert stats.num_edges == 0
    assert all(v == 0 for v in stats.type_counts.values())


def test_unknown_preset_rejected():
    with pytest.raises(ConfigError):
        preset("nonsense")


def test_non_reciprocal_config_rejected():
    with pytest.raises(ConfigError):
        InteractionConfig(relation_set=frozenset({R.H2T}))
    with pytest.raises(ConfigError):
        InteractionConfig(entity_set=frozenset({E.H2V, E.H2T, E.T2H}))


def test_exclude_out_of_range_rejected(small_kg):
    from hyrel import ContractError
    with pytest.raises(ContractError):
        build_relation_graph(small_kg, exclude=[99])


def test_oracle_equivalence_random(rng):
    for _ in range(150):
        kg = random_hkg(rng)
        for cfg in PRESETS.values():
            assert build_relation_graph(kg, cfg).edge_set() == \
                brute_force_relation_edges(kg, cfg)
            assert build_entity_graph(kg, cfg).edge_set() == \
                brute_force_entity_edges(kg, cfg)


def test_addallfi_is_union_of_extras(rng):
    for _ in range(50):
        kg = random_hkg(rng)
        default = build_relation_graph(kg, preset("default")).edge_set()
        k2k = build_relation_graph(kg, preset("addK2K")).edge_set()
        sharev = build_relation_graph(kg, preset("addShareV")).edge_set()
        allfi = build_relation_graph(kg, preset("addAllFI")).edge_set()
        assert allfi == default | (k2k - default) | (sharev - default)


def test_reciprocity_closure(rng):
    for _ in range(50):
        kg = random_hkg(rng)
        g = build_relation_graph(kg, preset("addAllFI"))
        edges = g.edge_set()
        assert all((d, REL_RECIPROCAL[t], s) in edges for s, t, d in edges)
        ge = build_entity_graph(kg)
        eedges = ge.edge_set()
        assert all((d, ENT_RECIPROCAL[t], s) in eedges for s, t, d in eedges)


def test_monotonicity_under_larger_alphabet(rng):
    for _ in range(30):
        kg = random_hkg(rng)
        small = build_relation_graph(kg, preset("noR2K")).edge_set()
        mid = build_relation_graph(kg, preset("default")).edge_set()
        big = build_relation_graph(kg, preset("addAllFI")).edge_set()
        assert small <= mid <= big
        e_small = build_entity_graph(kg, preset("noV")).edge_set()
        e_big = build_entity_graph(kg).edge_set()
        assert e_small <= e_big


def test_exclusion_soundness(rng):
    for _ in range(40):
        kg = random_hkg(rng, min_facts=2)
        dropped = int(rng.integers(kg.num_facts))
        for build, oracle in ((build_relation_graph, brute_force_relation_edges),
                              (build_entity_graph, brute_force_entity_edges)):
            cfg = preset("addAllFI")
            with_excl = build(kg, cfg, exclude=[dropped]).edge_set()
            assert with_excl == oracle(kg, cfg, exclude=[dropped])
            assert with_excl <= build(kg, cfg).edge_set()


def test_construction_permutation_equivariance(rng):
    for _ in range(30):
        kg = random_hkg(rng)
        pkg, phi, tau = permute_hkg(kg, rng)
        for cfg in (preset("default"), preset("addAllFI")):
            g = build_relation_graph(kg, cfg)
            pg = build_relation_graph(pkg, cfg)
            named = {(kg.relations[s], t, kg.relations[d]) for s, t, d in g.edges}
            renamed = {(tau[a], t, tau[b]) for a, t, b in named}
            pnamed = {(pkg.relations[s], t, pkg.relations[d]) for s, t, d in pg.edges}
            assert renamed == pnamed
        ge = build_entity_graph(kg)
        pge = build_entity_graph(pkg)
        named = {(kg.entities[s], t, kg.entities[d]) for s, t, d in ge.edges}
        assert {(phi[a], t, phi[b]) for a, t, b in named} == \
            {(pkg.entities[s], t, pkg.entities[d]) for s, t, d in pge.edges}


def test_edges_sorted_and_deterministic(rng):
    kg = random_hkg(rng)
    g1 = build_relation_graph(kg, preset("addAllFI"))
    g2 = build_relation_graph(kg, preset("addAllFI"))
    assert g1.edges == g2.edges
    order = {t: i for i, t in enumerate(g1.alphabet)}
    keys = [(s, order[t], d) for s, t, d in g1.edges]
    assert keys == sorted(keys)


def test_export_edge_list_format():
    kg = Hkg([HyperFact("x", "r1", "a"), HyperFact("x", "r2", "b")])
    g = build_relation_graph(kg)
    lines = export_edge_list(g, kg.relations)
    assert lines == ["r1\th2h_r\tr2", "r2\th2h_r\tr1"]


def test_annotated_entity_graph_carries_relations():
    kg = Hkg([HyperFact("h", "r", "t", (("k", "v"),))])
    g = build_entity_graph(kg, with_fact_relations=True)
    rels = g.relation_array()
    assert len(rels) == g.num_edges
    r, k = kg.relation_index["r"], kg.relation_index["k"]
    by_type = {}
    for (s, t, d), rel in zip(g.edges, rels):
        by_type.setdefault(t, set()).add(int(rel))
    assert by_type[E.H2T] == {r} and by_type[E.T2H] == {r}
    assert by_type[E.H2V] == {k} and by_type[E.V2H] == {k}
    # Reciprocity of the plain (src, type, dst) view still holds.
    edges = g.edge_set()
    assert all((d, ENT_RECIPROCAL[t], s) in edges for s, t, d in edges)
