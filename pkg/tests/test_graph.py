import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from submatch.graph import (
    GraphError,
    LabeledGraph,
    MatchPair,
    encode_features,
    label_vocabulary,
    matching_matrix,
)


def test_edges_are_canonical_and_sorted():
    g = LabeledGraph(4, [(3, 1), (0, 2)])
    assert g.edges == ((0, 2), (1, 3))
    assert g.has_edge(3, 1) and g.has_edge(1, 3)
    assert g.degree(1) == 1


@pytest.mark.parametrize("edges", [[(0, 0)], [(0, 1), (1, 0)], [(0, 5)]])
def test_invalid_edges_rejected(edges):
    with pytest.raises(GraphError):
        LabeledGraph(3, edges)


def test_feature_kind_inference():
    assert LabeledGraph(2, [], [1, 2]).feature_kind == "categorical"
    assert LabeledGraph(2, [], [[0.5], [1.0]]).feature_kind == "numerical"
    assert LabeledGraph(2).feature_kind == "none"


def test_ragged_numerical_rejected():
    with pytest.raises(GraphError):
        LabeledGraph(2, [], np.zeros((3, 2)))


def test_graph_is_immutable():
    g = LabeledGraph(2, [(0, 1)], [0, 1])
    with pytest.raises(AttributeError):
        g.num_nodes = 3
    with pytest.raises(ValueError):
        g.node_features[0] = 5


def test_edge_labels_follow_subgraph():
    g = LabeledGraph(3, [(0, 1), (1, 2)], [0, 1, 2], edge_labels={(1, 0): 7, (1, 2): 9})
    sub = g.subgraph([2, 1])
    assert sub.edges == ((0, 1),)
    assert sub.edge_label(0, 1) == 9
    assert sub.node_features.tolist() == [2, 1]


def test_permute_moves_features_and_edges():
    g = LabeledGraph(3, [(0, 1)], [5, 6, 7])
    h = g.permute([2, 0, 1])
    assert h.edges == ((0, 2),)
    assert h.node_features.tolist() == [6, 7, 5]


def test_components():
    g = LabeledGraph(5, [(0, 1), (3, 4)])
    assert sorted(map(sorted, g.components())) == [[0, 1], [2], [3, 4]]
    assert not g.is_connected()


class TestEncodeFeatures:
    def test_none_is_constant_column(self):
        out = encode_features(LabeledGraph(3, [(0, 1)]))
        np.testing.assert_array_equal(out, np.ones((3, 1)))

    def test_categorical_one_hot(self):
        g = LabeledGraph(2, [], [0, 2])
        out = encode_features(g, {0: 0, 1: 1, 2: 2})
        np.testing.assert_array_equal(out, [[1, 0, 0], [0, 0, 1]])

    def test_numerical_copied(self):
        g = LabeledGraph(1, [], [[0.5, 1.0]])
        np.testing.assert_array_equal(encode_features(g), [[0.5, 1.0]])

    def test_missing_label_raises(self):
        with pytest.raises(GraphError):
            encode_features(LabeledGraph(1, [], [4]), {0: 0})

    def test_vocabulary_sorted(self):
        voc = label_vocabulary([LabeledGraph(2, [], [9, 3]), LabeledGraph(1, [], [5])])
        assert voc == {3: 0, 5: 1, 9: 2}


class TestMatchPair:
    def test_matrix_is_union_of_mappings(self):
        g = LabeledGraph(4, [(0, 1), (1, 2), (2, 3)])
        q = LabeledGraph(2, [(0, 1)])
        pair = MatchPair(g, q, [(0, 1), (2, 3)])
        np.testing.assert_array_equal(pair.matrix, [[1, 0, 1, 0], [0, 1, 0, 1]])

    def test_non_injective_rejected(self):
        g = LabeledGraph(3)
        with pytest.raises(GraphError):
            MatchPair(g, LabeledGraph(2), [(1, 1)])

    def test_feature_kinds_must_agree(self):
        with pytest.raises(GraphError):
            MatchPair(LabeledGraph(2, [], [0, 1]), LabeledGraph(1), [(0,)])

    def test_needs_a_mapping(self):
        with pytest.raises(GraphError):
            MatchPair(LabeledGraph(2), LabeledGraph(1), [])


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(0, 3), st.data())
def test_matrix_matches_brute_force_definition(nq, extra, data):
    ng = nq + extra
    all_maps = list(itertools.permutations(range(ng), nq))
    picks = data.draw(st.lists(st.sampled_from(all_maps), min_size=1, max_size=6, unique=True))
    mat = matching_matrix(picks, nq, ng)
    for i in range(nq):
        for j in range(ng):
            assert mat[i, j] == int(any(m[i] == j for m in picks))
    assert mat.any(axis=1).all()


def test_pickle_round_trip():
    import pickle

    g = LabeledGraph(3, [(0, 1)], [0, 1, 1], edge_labels={(0, 1): 4})
    empty = LabeledGraph(2, [], [0, 0], edge_labels={})
    pair = MatchPair(g, g.subgraph([1, 0]), [(1, 0)], truncated=True)
    assert pickle.loads(pickle.dumps(g)) == g
    assert pickle.loads(pickle.dumps(empty)).edge_labels == {}
    assert pickle.loads(pickle.dumps(pair)) == pair
