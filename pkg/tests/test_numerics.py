import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from submatch.numerics import (
    CheckpointError,
    NonFiniteError,
    ParamStore,
    Tensor,
    adam_step,
    grad_check,
    load_checkpoint,
    no_grad,
    ops,
    save_checkpoint,
)


class TestSoftmax:
    def test_two_entries(self):
        p = ops.row_softmax_masked(np.array([[1.0, 0.0]])).data
        e = np.e
        np.testing.assert_allclose(p, [[e / (1 + e), 1 / (1 + e)]], rtol=1e-12)

    def test_temperature_sharpens(self):
        p = ops.row_softmax_masked(np.array([[1.0, 0.0]]), temperature=0.5).data
        np.testing.assert_allclose(p[0, 0], np.exp(2) / (1 + np.exp(2)))

    def test_mask_zeroes_entries(self):
        mask = np.array([[1, 0, 1]])
        p = ops.row_softmax_masked(np.array([[0.3, 50.0, 0.3]]), mask).data
        np.testing.assert_allclose(p, [[0.5, 0.0, 0.5]])

    def test_large_logits_stable(self):
        p = ops.row_softmax_masked(np.array([[1000.0, 999.0]])).data
        assert np.isfinite(p).all()
        np.testing.assert_allclose(p.sum(), 1.0)

    def test_empty_row(self):
        mask = np.array([[0, 0], [1, 1]])
        with pytest.raises(ValueError):
            ops.row_softmax_masked(np.zeros((2, 2)), mask)
        p = ops.row_softmax_masked(np.zeros((2, 2)), mask, empty_rows="zero").data
        np.testing.assert_array_equal(p, [[0, 0], [0.5, 0.5]])

    def test_bad_temperature(self):
        with pytest.raises(ValueError):
            ops.row_softmax_masked(np.zeros((1, 2)), temperature=0.0)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (3, 5), elements=st.floats(-50, 50)),
           arrays(np.bool_, (3, 5)))
    def test_rows_sum_to_one(self, x, mask):
        mask[:, 0] = True
        p = ops.row_softmax_masked(x, mask).data
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert (p[~mask] == 0).all()


def test_leaky_relu_slope():
    np.testing.assert_allclose(ops.leaky_relu(np.array([-1.0, 2.0]), 0.2).data, [-0.2, 2.0])


def test_cosine_similarity_zero_rows():
    s = ops.cosine_similarity_matrix(np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([[2.0, 0.0]])).data
    np.testing.assert_allclose(s, [[0.0], [1.0]])


def test_non_finite_detected():
    with pytest.raises(NonFiniteError):
        ops.div(np.array([1.0]), np.array([0.0]))


def test_no_grad_skips_graph():
    w = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        out = ops.mul(w, 2.0)
    assert not out.requires_grad


def test_gradient_accumulates_over_reuse():
    w = Tensor(np.array([3.0]), requires_grad=True)
    ops.sum(ops.add(ops.mul(w, w), w)).backward()
    np.testing.assert_allclose(w.grad, [7.0])


def _store(rng, **shapes):
    store = ParamStore()
    for name, shape in shapes.items():
        store.add(name, rng.normal(size=shape))
    return store


# each case: parameter shapes and a scalar function of the store
PRIMITIVE_CASES = {
    "add_broadcast": (dict(a=(3, 4), b=(1, 4)), lambda s: ops.sum(ops.mul(ops.add(s["a"], s["b"]), s["a"]))),
    "sub_div": (dict(a=(3,), b=(3,)),
                lambda s: ops.sum(ops.div(ops.sub(s["a"], s["b"]), ops.add(ops.mul(s["b"], s["b"]), 1.0)))),
    "matmul_batched": (dict(a=(4, 3), b=(2, 3, 5)), lambda s: ops.sum(ops.mul(ops.matmul(s["a"], s["b"]),
                                                                               ops.matmul(s["a"], s["b"])))),
    "transpose_reshape": (dict(a=(2, 3, 4)),
                          lambda s: ops.sum(ops.mul(ops.reshape(ops.transpose(s["a"], (1, 0, 2)), (3, 8)),
                                                    np.arange(24.0).reshape(3, 8)))),
    "concat_getitem": (dict(a=(2, 3), b=(2, 2)),
                       lambda s: ops.sum(ops.mul(ops.concat([s["a"], s["b"]], axis=1)[:, 1:4], 2.5))),
    "sigmoid_mean": (dict(a=(5,)), lambda s: ops.mean(ops.mul(ops.sigmoid(s["a"]), s["a"]))),
    "leaky_relu": (dict(a=(6,)), lambda s: ops.sum(ops.mul(ops.leaky_relu(s["a"], 0.2), s["a"]))),
    "absolute": (dict(a=(6,)), lambda s: ops.sum(ops.absolute(ops.add(s["a"], 0.37)))),
    "max": (dict(a=(4, 3)), lambda s: ops.sum(ops.mul(ops.max(s["a"], axis=0), np.array([1.0, 2.0, 3.0])))),
    "softmax_masked_tau": (dict(a=(3, 4), t=(1, 1)),
                           lambda s: ops.sum(ops.mul(ops.row_softmax_masked(
                               s["a"], np.array([[1, 1, 0, 1], [0, 1, 1, 1], [1, 0, 0, 1]]),
                               temperature=ops.sigmoid(s["t"])), np.arange(12.0).reshape(3, 4)))),
    "cosine": (dict(a=(3, 4), b=(5, 4)),
               lambda s: ops.sum(ops.mul(ops.cosine_similarity_matrix(s["a"], s["b"]),
                                         np.arange(15.0).reshape(3, 5)))),
    "row_norm": (dict(a=(3, 4)), lambda s: ops.sum(ops.row_norm(s["a"]))),
    "mlp": (dict(x=(3, 4), w1=(4, 5), b1=(1, 5), w2=(5, 2), b2=(1, 2)),
            lambda s: ops.sum(ops.mul(ops.mlp_apply(s["x"], [(s["w1"], s["b1"]), (s["w2"], s["b2"])]),
                                      np.array([[1.0, -2.0]])))),
}


@pytest.mark.parametrize("case", sorted(PRIMITIVE_CASES))
def test_primitive_gradients(case):
    shapes, f = PRIMITIVE_CASES[case]
    store = _store(np.random.default_rng(3), **shapes)
    report = grad_check(lambda: f(store), store)
    assert report.passed, (case, report.failures(), report.max_rel_error)


def test_grad_check_catches_wrong_gradient():
    store = _store(np.random.default_rng(0), a=(3,))

    def broken():
        a = store["a"]
        out = ops.sum(ops.mul(a, a))
        orig = out._backward
        out._backward = lambda g: orig(2.0 * g)
        return out

    assert not grad_check(broken, store).passed


class TestAdam:
    def test_first_step_moves_by_lr(self):
        store = ParamStore()
        w = store.add("w", np.array([1.0, -1.0]))
        w.grad = np.array([0.5, -3.0])
        adam_step(store, lr=0.001)
        np.testing.assert_allclose(w.data, [1.0 - 0.001, -1.0 + 0.001], rtol=1e-6)

    def test_zero_gradient_is_noop(self):
        store = ParamStore()
        w = store.add("w", np.array([2.0]))
        w.grad = np.zeros(1)
        adam_step(store)
        assert w.data[0] == 2.0

    def test_quadratic_converges(self):
        store = ParamStore()
        w = store.add("w", np.array([0.0]))
        for _ in range(100):
            store.zero_grad()
            ops.sum(ops.mul(ops.sub(w, 3.0), ops.sub(w, 3.0))).backward()
            adam_step(store, lr=0.1)
        assert abs(w.data[0] - 3.0) < 0.1

    def test_non_finite_gradient_rejected(self):
        store = ParamStore()
        w = store.add("w", np.array([0.0]))
        w.grad = np.array([np.nan])
        with pytest.raises(NonFiniteError):
            adam_step(store)
        assert w.data[0] == 0.0


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        store = _store(np.random.default_rng(1), a=(2, 3), b=(1, 1))
        store["a"].grad = np.ones((2, 3))
        adam_step(store)
        path = tmp_path / "ck.json"
        save_checkpoint(path, store, {"k": 1}, {"epoch": 3})
        loaded, config, meta = load_checkpoint(path)
        assert config == {"k": 1} and meta == {"epoch": 3}
        assert loaded.step == store.step
        for name in store.names():
            np.testing.assert_array_equal(loaded[name].data, store[name].data)
            np.testing.assert_array_equal(loaded.m[name], store.m[name])
            np.testing.assert_array_equal(loaded.v[name], store.v[name])

    def test_wrong_format(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "other"}')
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
