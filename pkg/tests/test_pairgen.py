import numpy as np
import pytest

from submatch.exact import brute_force_mappings, is_match
from submatch.graph import LabeledGraph
from submatch.pairgen import (
    GenConfig,
    SyntheticParams,
    generate_pairs,
    generate_synthetic_corpus,
    sample_connected_subgraph,
)

from conftest import complete_graph


@pytest.fixture(scope="module")
def corpus():
    return generate_synthetic_corpus(SyntheticParams(12, (9, 12), 0.35, 3), np.random.default_rng(4))


def test_corpus_shape(corpus):
    assert len(corpus) == 12
    for g in corpus:
        assert 9 <= g.num_nodes <= 12
        assert g.is_connected()
        assert set(g.node_features.tolist()) <= {0, 1, 2}


def test_corpus_without_labels():
    graphs = generate_synthetic_corpus(SyntheticParams(3, (5, 6), 0.8, 0), np.random.default_rng(0))
    assert all(g.feature_kind == "none" for g in graphs)


def test_corpus_rejection_limit():
    with pytest.raises(ValueError, match="disconnected"):
        generate_synthetic_corpus(SyntheticParams(1, (30, 30), 0.0, 2), np.random.default_rng(0),
                                  max_rejections=5)


def test_sampled_subgraph_is_connected_and_induced(corpus, rng):
    for g in corpus:
        q, ext = sample_connected_subgraph(g, 5, rng)
        assert q.num_nodes == 5 and len(set(ext)) == 5
        assert q.is_connected()
        assert q == g.subgraph(list(ext))
        assert is_match(g, q, ext)


def test_sampling_needs_big_component(rng):
    g = LabeledGraph(4, [(0, 1), (2, 3)])
    with pytest.raises(ValueError):
        sample_connected_subgraph(g, 3, rng)


def test_pairs_hold_every_mapping(corpus):
    pairs = generate_pairs(GenConfig((3, 5), 15, seed=2), corpus)
    assert len(pairs) == 15
    for p in pairs:
        assert not p.truncated
        assert 3 <= p.query_graph.num_nodes <= 5
        assert p.query_graph.is_connected()
        assert p.reference_mapping == tuple(p.mappings[0])
        assert sorted(p.mappings) == brute_force_mappings(p.data_graph, p.query_graph, max_nodes=12)


def test_generation_is_deterministic(corpus):
    cfg = GenConfig((3, 5), 10, seed=9)
    assert generate_pairs(cfg, corpus) == generate_pairs(cfg, corpus)
    assert generate_pairs(cfg, corpus) != generate_pairs(GenConfig((3, 5), 10, seed=10), corpus)


def test_parallel_matches_serial(corpus):
    cfg = GenConfig((3, 4), 6, seed=1)
    assert generate_pairs(cfg, corpus, n_jobs=2) == generate_pairs(cfg, corpus)


def test_offset_continues_the_sequence(corpus):
    full = generate_pairs(GenConfig((3, 4), 6, seed=1), corpus)
    tail = generate_pairs(GenConfig((3, 4), 3, seed=1), corpus, offset=3)
    assert full[3:] == tail


def test_symmetric_query_has_all_automorphic_matches():
    # a triangle query in K4 has 24 mappings
    pairs = generate_pairs(GenConfig((3, 3), 3, seed=0), [complete_graph(4)])
    for p in pairs:
        assert len(p.mappings) == 24
        assert (p.matrix == 1).all()


def test_mapping_cap_truncates():
    pairs = generate_pairs(GenConfig((3, 3), 1, seed=0, mapping_cap=5), [complete_graph(6)])
    assert pairs[0].truncated and len(pairs[0].mappings) == 5


def test_small_graphs_skipped(caplog):
    corpus = [LabeledGraph(2, [(0, 1)]), complete_graph(5)]
    pairs = generate_pairs(GenConfig((4, 4), 2, seed=0), corpus)
    assert all(p.data_graph == corpus[1] for p in pairs)
    assert "skipped 1" in caplog.text
    with pytest.raises(ValueError):
        generate_pairs(GenConfig((6, 6), 1), corpus)


def test_config_validation():
    with pytest.raises(ValueError):
        GenConfig((5, 4))
    with pytest.raises(ValueError):
        GenConfig(num_samples=0)
