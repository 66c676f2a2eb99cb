import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from submatch import AEDNetMatcher, ExactMatcher, LabeledGraph, MatchPair
from submatch.pairgen import GenConfig, SyntheticParams, generate_pairs, generate_synthetic_corpus

from conftest import complete_graph, path_graph


@pytest.fixture(scope="module")
def pairs():
    corpus = generate_synthetic_corpus(SyntheticParams(6, (9, 11), 0.35, 3), np.random.default_rng(0))
    return generate_pairs(GenConfig((3, 4), 8, seed=1), corpus)


@pytest.fixture(scope="module")
def fitted(pairs):
    return AEDNetMatcher(n_layers=2, n_heads=2, hidden_dim=8, epochs=2).fit(pairs[:5], validation=pairs[5:])


def test_params_round_trip():
    est = AEDNetMatcher(hidden_dim=16, epochs=3)
    params = est.get_params()
    assert params["hidden_dim"] == 16 and params["epochs"] == 3
    other = clone(est).set_params(lr=0.01)
    assert other.lr == 0.01 and est.lr == 0.001


def test_not_fitted():
    with pytest.raises(NotFittedError):
        AEDNetMatcher().predict([(complete_graph(3), complete_graph(2))])


def test_predict_shapes(fitted, pairs):
    proba = fitted.predict_proba(pairs)
    preds = fitted.predict([(p.data_graph, p.query_graph) for p in pairs])
    for p, m, y in zip(pairs, proba, preds):
        assert m.shape == (p.query_graph.num_nodes, p.data_graph.num_nodes)
        np.testing.assert_allclose(m.sum(axis=1), 1.0)
        assert y.shape == (p.query_graph.num_nodes,)
        np.testing.assert_array_equal(y, m.argmax(axis=1))
    assert 0.0 <= fitted.score(pairs) <= 1.0
    assert len(fitted.history_) == 2


def test_checkpoint_round_trip(fitted, pairs, tmp_path):
    path = tmp_path / "m.json"
    fitted.save(path)
    loaded = AEDNetMatcher.from_checkpoint(path)
    for a, b in zip(fitted.predict_proba(pairs), loaded.predict_proba(pairs)):
        np.testing.assert_array_equal(a, b)


def test_input_validation(fitted, pairs):
    with pytest.raises(TypeError):
        fitted.predict(pairs[0])
    with pytest.raises(ValueError):
        fitted.predict([])
    with pytest.raises(TypeError):
        fitted.predict([1, 2])
    with pytest.raises(ValueError):
        fitted.fit([(pairs[0].data_graph, pairs[0].query_graph)])
    with pytest.raises(ValueError):
        fitted.predict([(LabeledGraph(3), LabeledGraph(2))])


def test_exact_matcher():
    est = ExactMatcher()
    X = [(complete_graph(4), complete_graph(3)), (complete_graph(3), path_graph(3))]
    maps = est.predict(X)
    assert [len(m) for m in maps] == [24, 0]
    mats = est.transform(X)
    assert mats[0].shape == (3, 4) and (mats[0] == 1).all()
    assert not mats[1].any()
    assert ExactMatcher(mode="first").predict(X)[0] == [(0, 1, 2)]
    res = ExactMatcher(limit=5).search(X)
    assert res[0].stats.truncated
    with pytest.raises(ValueError):
        ExactMatcher(mode="any").fit()


def test_exact_matcher_score():
    g = complete_graph(4)
    pair = MatchPair(g, complete_graph(3), [(1, 2, 3)])
    assert ExactMatcher().score([pair]) == 0.0  # first found mapping is (0, 1, 2)
    full = MatchPair(g, complete_graph(3), ExactMatcher().predict([(g, complete_graph(3))])[0])
    assert ExactMatcher().score([full]) == 1.0
