import math

import numpy as np
import pytest

from momentrl.autodiff import engine as eng
from momentrl.autodiff.store import ParameterStore, add_dense, adam_update
from momentrl.evidential import (
    Evidence,
    OffSimplexError,
    dirichlet_log_density,
    evidence_head,
    evidential_loss,
    evidential_loss_rows,
)
from momentrl.timeline import N_JOINT_CLASSES

from oracles import finite_diff_param_grads, mc_dirichlet_integral


def _head_store(obs_dim=6, seed=0):
    store = ParameterStore()
    view = store.view("h.")
    add_dense(view, "evi", N_JOINT_CLASSES, obs_dim)
    store.freeze()
    store.init_uniform(np.random.default_rng(seed))
    return store, view


class TestEvidence:
    def test_zero_head_gives_softplus_of_zero(self):
        store, view = _head_store()
        store._params[:] = 0.0
        ev = evidence_head(eng.const(np.ones(6)), view)
        assert np.allclose(ev.e, math.log(2.0))
        expected_s = 16.0 * (math.log(2.0) + 1.0)
        assert ev.strength == pytest.approx(expected_s, abs=1e-9)
        assert ev.uncertainty == pytest.approx(16.0 / expected_s, abs=1e-9)
        assert ev.uncertainty == pytest.approx(0.5906, abs=1e-4)

    def test_uncertainty_in_unit_interval(self, rng):
        store, view = _head_store(seed=3)
        for _ in range(50):
            ev = evidence_head(eng.const(rng.normal(size=6) * 10), view)
            assert 0.0 < ev.uncertainty <= 1.0
            assert np.all(ev.e >= 0.0)

    def test_identity_u_times_s(self, rng):
        store, view = _head_store(seed=4)
        for _ in range(100):
            ev = evidence_head(eng.const(rng.normal(size=6)), view)
            assert ev.uncertainty * ev.strength == pytest.approx(N_JOINT_CLASSES, abs=1e-9)

    def test_zero_evidence_max_uncertainty(self):
        ev = Evidence.from_raw(np.zeros(16))
        assert ev.uncertainty == 1.0
        assert ev.strength == 16.0

    def test_scaling_weights_up_decreases_uncertainty(self, rng):
        store, view = _head_store(seed=5)
        state = eng.const(rng.normal(size=6))
        u_before = evidence_head(state, view).uncertainty
        store._params[:] *= 8.0
        u_after = evidence_head(state, view).uncertainty
        s_before = 16.0 / u_before
        s_after = 16.0 / u_after
        assert s_after > s_before
        assert u_after < u_before

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            Evidence.from_raw(np.full(16, -0.1))

    def test_rejects_wrong_size(self):
        with pytest.raises(ValueError):
            Evidence.from_raw(np.zeros(4))


class TestEvidentialLoss:
    def test_all_zero_evidence(self):
        ev = Evidence.from_raw(np.zeros(16))
        loss = evidential_loss(ev, 3).item()
        assert loss == pytest.approx(math.log(16.0), abs=1e-9)
        assert loss == pytest.approx(2.7726, abs=1e-4)

    def test_mass_on_true_class(self):
        e = np.zeros(16)
        e[5] = 9.0
        loss = evidential_loss(Evidence.from_raw(e), 5).item()
        assert loss == pytest.approx(math.log(25.0) - math.log(10.0), abs=1e-9)
        assert loss == pytest.approx(0.9163, abs=1e-4)

    def test_mass_on_wrong_class(self):
        e = np.zeros(16)
        e[2] = 9.0
        loss = evidential_loss(Evidence.from_raw(e), 5).item()
        assert loss == pytest.approx(math.log(25.0), abs=1e-9)
        assert loss > evidential_loss(Evidence.from_raw(np.zeros(16)), 5).item()

    def test_rejects_bad_class(self):
        with pytest.raises(ValueError):
            evidential_loss(Evidence.from_raw(np.zeros(16)), 16)

    def test_minimized_on_true_class_for_fixed_strength(self):
        # over all ways to place a fixed budget on one class, the true class wins
        budget = 6.0
        true_class = 4
        losses = []
        for j in range(16):
            e = np.zeros(16)
            e[j] = budget
            losses.append(evidential_loss(Evidence.from_raw(e), true_class).item())
        assert np.argmin(losses) == true_class

    def test_grid_enumeration_fixed_strength(self):
        # distribute units between the true class and one rival; more on-true is better
        true_class, rival = 1, 9
        prev = None
        for on_true in range(0, 7):
            e = np.zeros(16)
            e[true_class] = on_true
            e[rival] = 6 - on_true
            loss = evidential_loss(Evidence.from_raw(e), true_class).item()
            if prev is not None:
                assert loss < prev
            prev = loss

    def test_gradients_match_finite_differences(self, rng):
        store, view = _head_store(seed=8)
        state = eng.const(rng.normal(size=6))

        def loss():
            ev = evidence_head(state, view)
            return evidential_loss(ev, 7)

        store.zero_grads()
        eng.backward(loss())
        analytic = store._grads.copy()
        numeric = finite_diff_param_grads(lambda: loss().item(), store)
        assert np.allclose(analytic, numeric, rtol=1e-4, atol=1e-7)

    def test_rows_match_scalar_version(self, rng):
        rows = np.abs(rng.normal(size=(5, 16)))
        labels = np.array([0, 5, 9, 15, 3])
        batched = evidential_loss_rows(eng.const(rows), labels).item()
        single = np.mean(
            [evidential_loss(Evidence.from_raw(rows[i]), labels[i]).item() for i in range(5)]
        )
        assert batched == pytest.approx(single, abs=1e-12)

    def test_head_learns_synthetic_classification(self):
        # frozen linearly separable task: the head alone reaches high accuracy
        rng = np.random.default_rng(0)
        obs_dim, n = 12, 120
        directions = rng.normal(size=(16, obs_dim))
        labels = rng.integers(0, 16, size=n)
        states = rng.normal(size=(n, obs_dim)) * 0.3 + directions[labels] * 1.5

        store, view = _head_store(obs_dim=obs_dim, seed=1)
        for _ in range(500):
            idx = rng.integers(0, n)
            ev = evidence_head(eng.const(states[idx]), view)
            loss = evidential_loss(ev, int(labels[idx]))
            store.zero_grads()
            eng.backward(loss)
            adam_update(store, lr=0.01)
        correct = 0
        for i in range(n):
            ev = evidence_head(eng.const(states[i]), view)
            correct += int(np.argmax(ev.e) == labels[i])
        assert correct / n >= 0.9


class TestDirichletDensity:
    def test_uniform_alpha_density_is_log_gamma_c(self):
        p = np.full(16, 1.0 / 16.0)
        val = dirichlet_log_density(p, np.ones(16))
        assert val == pytest.approx(math.lgamma(16.0), abs=1e-9)
        assert val == pytest.approx(27.899, abs=1e-3)

    def test_zero_coordinate_with_evidence_is_neg_inf(self):
        p = np.zeros(16)
        p[0] = 1.0
        alpha = np.ones(16)
        alpha[1] = 2.0
        assert dirichlet_log_density(p, alpha) == float("-inf")

    def test_off_simplex_rejected(self):
        with pytest.raises(OffSimplexError):
            dirichlet_log_density(np.full(16, 0.9), np.ones(16))
        with pytest.raises(OffSimplexError):
            p = np.full(16, 1.0 / 16.0)
            p[0] -= 0.01  # sums to 0.99
            dirichlet_log_density(p, np.ones(16))

    def test_integrates_to_one_c3(self):
        alpha = np.array([2.0, 1.0, 1.0])
        est = mc_dirichlet_integral(dirichlet_log_density, alpha, n_samples=20000, seed=1)
        assert est == pytest.approx(1.0, rel=0.02)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            dirichlet_log_density(np.ones(3) / 3, np.ones(4))
