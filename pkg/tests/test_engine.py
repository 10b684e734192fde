import numpy as np
import pytest

from momentrl.autodiff import engine as eng
from momentrl.autodiff.engine import Act, Var
from momentrl.autodiff.store import (
    ParameterStore,
    add_dense,
    add_gru,
    adam_update,
    gru_params,
)

from oracles import finite_diff_param_grads

GRAD_RTOL = 1e-4
GRAD_ATOL = 1e-7


def _store_with(builder):
    store = ParameterStore()
    view = store.view("t.")
    builder(view)
    store.freeze()
    store.init_uniform(np.random.default_rng(5))
    return store, view


def _check_param_grads(f_loss, store):
    store.zero_grads()
    eng.backward(f_loss())
    analytic = store._grads.copy()
    numeric = finite_diff_param_grads(lambda: f_loss().item(), store)
    assert np.allclose(analytic, numeric, rtol=GRAD_RTOL, atol=GRAD_ATOL), (
        np.abs(analytic - numeric).max()
    )


class TestDenseForward:
    def test_identity_map(self):
        x = eng.const([1.0, 2.0])
        w = eng.const(np.eye(2))
        b = eng.const(np.zeros(2))
        out = eng.dense_forward(x, w, b, Act.IDENTITY)
        assert np.allclose(out.data, [1.0, 2.0])

    def test_constant_map(self):
        x = eng.const([5.0, -3.0])
        out = eng.dense_forward(x, eng.const(np.zeros((1, 2))), eng.const([3.0]), Act.IDENTITY)
        assert np.allclose(out.data, [3.0])

    def test_relu_clamps(self):
        out = eng.dense_forward(
            eng.const([-2.0, 1.0]), eng.const([[1.0, 1.0]]), eng.const([0.0]), Act.RELU
        )
        assert np.allclose(out.data, [0.0])

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            eng.dense_forward(eng.const([1.0, 2.0, 3.0]), eng.const(np.ones((2, 2))),
                              eng.const(np.zeros(2)), Act.IDENTITY)

    @pytest.mark.parametrize("act", list(Act))
    def test_gradients_vector(self, act, rng):
        store, view = _store_with(lambda v: add_dense(v, "l", 4, 3))
        x = eng.const(rng.normal(size=3))

        def loss():
            y = eng.dense_forward(x, view["l.w"], view["l.b"], act)
            return eng.vsum(eng.square(y))

        _check_param_grads(loss, store)

    @pytest.mark.parametrize("act", list(Act))
    def test_gradients_batched(self, act, rng):
        store, view = _store_with(lambda v: add_dense(v, "l", 4, 3))
        x = eng.const(rng.normal(size=(5, 3)))

        def loss():
            y = eng.dense_forward(x, view["l.w"], view["l.b"], act)
            return eng.vsum(eng.square(y))

        _check_param_grads(loss, store)


class TestGru:
    def test_zero_everything_gives_zero_state(self):
        store, view = _store_with(lambda v: add_gru(v, "g", 4, 3))
        store._params[:] = 0.0
        h = eng.const(np.zeros(4))
        out = eng.gru_step(h, eng.const([1.0, -2.0, 0.5]), gru_params(view, "g"))
        assert np.allclose(out.data, 0.0)

    def test_hidden_bounded(self, rng):
        store, view = _store_with(lambda v: add_gru(v, "g", 4, 3))
        h = eng.const(np.zeros(4))
        for _ in range(50):
            h = eng.gru_step(h, eng.const(rng.normal(size=3)), gru_params(view, "g"))
            assert np.all(np.abs(h.data) < 1.0)
        # tanh saturates to exactly 1.0 in float64 for extreme inputs
        for _ in range(10):
            h = eng.gru_step(h, eng.const(rng.normal(size=3) * 1e3), gru_params(view, "g"))
            assert np.all(np.abs(h.data) <= 1.0)

    def test_unrolled_gradients_match_finite_differences(self, rng):
        store, view = _store_with(lambda v: add_gru(v, "g", 4, 3))
        xs = rng.normal(size=(3, 3))

        def loss():
            h = eng.const(np.zeros(4))
            for t in range(3):
                h = eng.gru_step(h, eng.const(xs[t]), gru_params(view, "g"))
            return eng.vsum(eng.square(h))

        _check_param_grads(loss, store)

    def test_gradient_w_r_t_first_input(self, rng):
        store, view = _store_with(lambda v: add_gru(v, "g", 4, 3))
        xs = rng.normal(size=(3, 3))

        def run(x0_var):
            h = eng.const(np.zeros(4))
            h = eng.gru_step(h, x0_var, gru_params(view, "g"))
            for t in range(1, 3):
                h = eng.gru_step(h, eng.const(xs[t]), gru_params(view, "g"))
            return eng.vsum(eng.square(h))

        x0 = eng.const(xs[0].copy())
        loss = run(x0)
        eng.backward(loss)
        analytic = x0.grad.copy()

        numeric = np.zeros(3)
        for i in range(3):
            for sign in (1.0, -1.0):
                x = xs[0].copy()
                x[i] += sign * 1e-5
                numeric[i] += sign * run(eng.const(x)).item()
        numeric /= 2e-5
        assert np.allclose(analytic, numeric, rtol=1e-4, atol=1e-8)

    def test_shape_mismatch(self):
        store, view = _store_with(lambda v: add_gru(v, "g", 4, 3))
        with pytest.raises(ValueError):
            eng.gru_step(eng.const(np.zeros(5)), eng.const(np.zeros(3)), gru_params(view, "g"))


class TestSoftmax:
    def test_symmetry(self):
        assert np.allclose(eng.softmax(eng.const([0.0, 0.0])).data, [0.5, 0.5])

    def test_large_equal_logits(self):
        out = eng.softmax(eng.const([1000.0, 1000.0, 1000.0]))
        assert np.allclose(out.data, 1.0 / 3.0)
        assert np.isfinite(out.data).all()

    def test_exp_ratio(self):
        out = eng.softmax(eng.const([np.log(1.0), np.log(3.0)]))
        assert np.allclose(out.data, [0.25, 0.75], atol=1e-12)

    def test_sums_to_one_and_finite_for_huge_logits(self, rng):
        for _ in range(100):
            logits = rng.uniform(-1e6, 1e6, size=7)
            out = eng.softmax(eng.const(logits)).data
            assert abs(out.sum() - 1.0) < 1e-9
            assert np.isfinite(out).all()

    def test_gradients(self, rng):
        store, view = _store_with(lambda v: add_dense(v, "l", 5, 3))
        x = eng.const(rng.normal(size=3))

        def loss():
            y = eng.dense_forward(x, view["l.w"], view["l.b"], Act.IDENTITY)
            p = eng.softmax(y)
            return eng.vsum(eng.square(p))

        _check_param_grads(loss, store)

    def test_log_softmax_and_pick_gradients(self, rng):
        store, view = _store_with(lambda v: add_dense(v, "l", 5, 3))
        x = eng.const(rng.normal(size=3))

        def loss():
            y = eng.dense_forward(x, view["l.w"], view["l.b"], Act.IDENTITY)
            return eng.scale(eng.pick(eng.log_softmax(y), 2), -1.0)

        _check_param_grads(loss, store)


class TestSampling:
    def test_degenerate(self, rng):
        assert eng.sample_categorical(np.array([1.0, 0.0, 0.0]), rng) == 0

    def test_frequency(self):
        rng = np.random.default_rng(42)
        draws = [eng.sample_categorical(np.array([0.5, 0.5]), rng) for _ in range(10000)]
        freq0 = draws.count(0) / len(draws)
        assert abs(freq0 - 0.5) < 0.02

    def test_determinism(self):
        p = np.array([0.2, 0.3, 0.5])
        r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
        s1 = [eng.sample_categorical(p, r1) for _ in range(50)]
        s2 = [eng.sample_categorical(p, r2) for _ in range(50)]
        assert s1 == s2

    def test_rejects_unnormalized(self, rng):
        with pytest.raises(ValueError):
            eng.sample_categorical(np.array([0.5, 0.6]), rng)


class TestBackwardRules:
    def test_square_derivative(self):
        store = ParameterStore()
        store.add("w", ())
        store.freeze()
        store.value("w")[...] = 3.0
        loss = eng.square(store.leaf("w"))
        eng.backward(loss)
        assert store.grad("w") == pytest.approx(6.0, abs=1e-12)

    def test_shared_parameter_grads_add(self):
        store = ParameterStore()
        store.add("w", ())
        store.freeze()
        store.value("w")[...] = 2.0
        loss = eng.add(eng.square(store.leaf("w")), eng.scale(store.leaf("w"), 3.0))
        eng.backward(loss)
        assert store.grad("w") == pytest.approx(2.0 * 2.0 + 3.0, abs=1e-12)

    def test_backward_requires_scalar(self):
        with pytest.raises(ValueError):
            eng.backward(eng.const([1.0, 2.0]))

    def test_two_layer_network_gradcheck(self, rng):
        def build(v):
            add_dense(v, "l1", 6, 4)
            add_dense(v, "l2", 2, 6)

        store, view = _store_with(build)
        x = eng.const(rng.normal(size=4))

        def loss():
            h = eng.dense_forward(x, view["l1.w"], view["l1.b"], Act.SOFTPLUS)
            y = eng.dense_forward(h, view["l2.w"], view["l2.b"], Act.SIGMOID)
            return eng.vmean(eng.square(y))

        _check_param_grads(loss, store)

    def test_mixed_ops_gradcheck(self, rng):
        store, view = _store_with(lambda v: add_dense(v, "l", 4, 3))
        x = eng.const(rng.normal(size=(6, 3)))
        labels = np.array([0, 3, 1, 2, 0, 1])

        def loss():
            y = eng.dense_forward(x, view["l.w"], view["l.b"], Act.IDENTITY)
            ce = eng.cross_entropy_rows(y, labels)
            sums = eng.row_sum(eng.dense_forward(x, view["l.w"], view["l.b"], Act.SOFTPLUS))
            picked = eng.gather_rows(y, labels)
            return eng.add(ce, eng.add(eng.vmean(eng.square(sums)), eng.vmean(eng.square(picked))))

        _check_param_grads(loss, store)

    def test_concat_stack_gradcheck(self, rng):
        def build(v):
            add_dense(v, "a", 3, 2)
            add_dense(v, "b", 2, 2)

        store, view = _store_with(build)
        x = eng.const(rng.normal(size=2))

        def loss():
            p1 = eng.dense_forward(x, view["a.w"], view["a.b"], Act.IDENTITY)
            p2 = eng.dense_forward(x, view["b.w"], view["b.b"], Act.SIGMOID)
            cat = eng.concat([p1, p2])
            rows = eng.stack_rows([cat, eng.scale(cat, 2.0)])
            return eng.vmean(eng.square(eng.row(rows, 1)))

        _check_param_grads(loss, store)


class TestFiniteness:
    def test_bounded_inputs_stay_finite(self, rng):
        def build(v):
            add_dense(v, "l1", 8, 6)
            add_gru(v, "g", 8, 8)
            add_dense(v, "l2", 3, 8)

        store, view = _store_with(build)
        for _ in range(20):
            x = eng.const(rng.uniform(-1e3, 1e3, size=6))
            h = eng.dense_forward(x, view["l1.w"], view["l1.b"], Act.SOFTPLUS)
            h = eng.gru_step(h, h, gru_params(view, "g"))
            y = eng.dense_forward(h, view["l2.w"], view["l2.b"], Act.SIGMOID)
            loss = eng.vsum(eng.square(y))
            store.zero_grads()
            eng.backward(loss)
            assert np.isfinite(loss.data)
            assert np.isfinite(store._grads).all()


class TestNoGrad:
    def test_no_graph_recorded(self):
        with eng.no_grad():
            out = eng.add(eng.const(1.0), eng.const(2.0))
        assert out._parents == () and out._bwd is None

    def test_restores_state(self):
        with eng.no_grad():
            pass
        out = eng.add(eng.const(1.0), eng.const(2.0))
        assert out._bwd is not None


class TestAdam:
    def test_first_step_size(self):
        store = ParameterStore()
        store.add("w", ())
        store.freeze()
        store.value("w")[...] = 1.0
        store.grad("w")[...] = 1.0
        adam_update(store, lr=0.001)
        assert store.value("w") == pytest.approx(1.0 - 0.001, abs=1e-6)
        assert store.step_count == 1

    def test_zero_grad_no_change(self):
        store = ParameterStore()
        store.add("w", (3,))
        store.freeze()
        store.value("w")[...] = [1.0, -2.0, 0.5]
        adam_update(store, lr=0.1)
        assert np.allclose(store.value("w"), [1.0, -2.0, 0.5])

    def test_deterministic(self):
        def run():
            store = ParameterStore()
            store.add("w", (4,))
            store.freeze()
            store.init_uniform(np.random.default_rng(3))
            for step in range(5):
                store.grad("w")[...] = np.sin(np.arange(4) + step)
                adam_update(store, lr=0.01, clip_norm=5.0)
            return store.value("w").copy()

        a, b = run(), run()
        assert np.array_equal(a, b)

    def test_clipping_caps_global_norm(self):
        store = ParameterStore()
        store.add("w", (4,))
        store.freeze()
        store.grad("w")[...] = 100.0
        norm_before = store.grad_norm()
        assert norm_before > 5.0
        adam_update(store, lr=0.001, clip_norm=5.0)
        assert np.all(store._grads == 0.0)
