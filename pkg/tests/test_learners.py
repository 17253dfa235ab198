import numpy as np
import pytest
from conftest import fuzzed_stream
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import closed_form_theta, gcaci_loop
from sklearn.base import clone

from onlinecov.auditors import norm_envelope
from onlinecov.exceptions import ConfigError, DataError, DimensionError, NumericalError
from onlinecov.learners import (AdaptiveConformalInference, FTRLCoverage, GroupConditionalACI,
                                Regularizer, ScriptedPredictor, SwapRegretQuantile,
                                aci_step, euclidean_regularizer, ftrl_init, ftrl_step,
                                gcaci_init, gcaci_predict, gcaci_update, get_regularizer,
                                hyperbolic_regularizer, stationary_distribution, swap_init)


class TestGCACI:
    def test_matches_reference_loop(self, rng):
        G, tau = fuzzed_stream(rng, 500, k=5)
        m = GroupConditionalACI(q=0.9, eta=0.3).fit(G, tau)
        preds, path = gcaci_loop(G.tolist(), tau.tolist(), 0.9, 0.3)
        np.testing.assert_allclose(m.predictions_, preds, atol=1e-12)
        np.testing.assert_allclose(m.theta_path_, path, atol=1e-12)

    def test_closed_form(self, rng):
        G, tau = fuzzed_stream(rng, 2000)
        m = GroupConditionalACI(q=0.95, eta=0.1).fit(G, tau)
        expect = closed_form_theta(G.tolist(), tau.tolist(), m.predictions_.tolist(), 0.95, 0.1)
        np.testing.assert_allclose(m.theta_, expect, atol=1e-9)

    def test_path_shape_and_start(self, rng):
        G, tau = fuzzed_stream(rng, 30, k=4)
        m = GroupConditionalACI().fit(G, tau)
        assert m.theta_path_.shape == (31, 4)
        assert np.all(m.theta_path_[0] == 0) and np.array_equal(m.theta_path_[-1], m.theta_)

    def test_partial_fit_continues(self, rng):
        G, tau = fuzzed_stream(rng, 400, k=3)
        whole = GroupConditionalACI(eta=0.5).fit(G, tau)
        parts = GroupConditionalACI(eta=0.5)
        for lo in range(0, 400, 97):
            parts.partial_fit(G[lo:lo + 97], tau[lo:lo + 97])
        np.testing.assert_array_equal(whole.predictions_, parts.predictions_)
        np.testing.assert_array_equal(whole.theta_path_, parts.theta_path_)

    def test_refit_resets(self, rng):
        G, tau = fuzzed_stream(rng, 100, k=2)
        m = GroupConditionalACI().fit(G, tau)
        first = m.theta_.copy()
        m.fit(G, tau)
        np.testing.assert_array_equal(first, m.theta_)
        assert len(m.predictions_) == 100

    def test_dimension_mismatch_on_continue(self, rng):
        G, tau = fuzzed_stream(rng, 10, k=3)
        m = GroupConditionalACI().fit(G, tau)
        with pytest.raises(DimensionError):
            m.partial_fit(np.ones((2, 2)), [0.1, 0.2])
        with pytest.raises(DimensionError):
            m.predict(np.ones((1, 2)))

    def test_rejects_bad_inputs(self):
        with pytest.raises(ConfigError):
            GroupConditionalACI(q=1.2).fit(np.ones((2, 1)), [0.1, 0.2])
        with pytest.raises(ConfigError):
            GroupConditionalACI(eta=0.0).fit(np.ones((2, 1)), [0.1, 0.2])
        with pytest.raises(DataError):
            GroupConditionalACI().fit(np.ones((2, 1)), [0.1, 2.0])

    def test_sklearn_params(self):
        m = GroupConditionalACI(q=0.8, eta=0.2)
        assert m.get_params() == {"q": 0.8, "eta": 0.2, "record_path": True}
        c = clone(m.set_params(eta=0.4))
        assert c.eta == 0.4 and not hasattr(c, "theta_")

    def test_predict_uses_current_iterate(self, rng):
        G, tau = fuzzed_stream(rng, 50, k=2)
        m = GroupConditionalACI().fit(G, tau)
        np.testing.assert_allclose(m.predict(np.eye(2)), m.theta_)

    def test_no_path(self, rng):
        G, tau = fuzzed_stream(rng, 50, k=2)
        m = GroupConditionalACI(record_path=False).fit(G, tau)
        assert not hasattr(m, "theta_path_")

    def test_functional_layer_matches_estimator(self, rng):
        G, tau = fuzzed_stream(rng, 200, k=3)
        state = gcaci_init(3, 0.9, 0.5)
        preds = []
        for g, s in zip(G, tau):
            preds.append(gcaci_predict(state, g))
            state = gcaci_update(state, g, s)
        m = GroupConditionalACI(q=0.9, eta=0.5).fit(G, tau)
        np.testing.assert_array_equal(preds, m.predictions_)
        assert state.t == 201
        with pytest.raises(ValueError):
            state.theta[0] = 1.0

    @given(st.integers(0, 10_000), st.sampled_from([0.5, 0.9, 0.95]),
           st.sampled_from([0.05, 0.5, 1.0]))
    @settings(max_examples=40, deadline=None)
    def test_envelope_property(self, seed, q, eta):
        G, tau = fuzzed_stream(np.random.default_rng(seed), 300)
        m = GroupConditionalACI(q=q, eta=eta).fit(G, tau)
        t = np.arange(1, 302)
        sq = (m.theta_path_ ** 2).sum(axis=1)
        assert np.all(sq <= norm_envelope(t, q, eta, G.shape[1]) ** 2 + 1e-9)


class TestACI:
    def test_step_matches_gcaci(self, rng):
        tau = rng.uniform(size=300)
        state = gcaci_init(1, 0.9, 0.05)
        preds = []
        for s in tau:
            p, state = aci_step(state, s)
            preds.append(p)
        m = AdaptiveConformalInference(q=0.9, eta=0.05).fit(None, tau)
        np.testing.assert_array_equal(preds, m.predictions_)

    def test_ignores_groups(self, rng):
        tau = rng.uniform(size=100)
        a = AdaptiveConformalInference(eta=0.1).fit(np.zeros((100, 7)), tau)
        b = AdaptiveConformalInference(eta=0.1).fit(None, tau)
        np.testing.assert_array_equal(a.predictions_, b.predictions_)
        assert a.predict(np.zeros(3)).shape == (3,)

    def test_coverage_tracks_target(self, rng):
        m = AdaptiveConformalInference(q=0.9, eta=0.05).fit(None, rng.uniform(size=20_000))
        assert abs(m.coverage_ - 0.9) < 0.01


class TestRegularizers:
    @pytest.mark.parametrize("make", [euclidean_regularizer, hyperbolic_regularizer])
    def test_mirror_maps_invert(self, make):
        r = make(0.5).validate(4)
        x = np.linspace(-3, 3, 13)
        np.testing.assert_allclose(r.inv_grad(r.grad(x)), x, atol=1e-12)

    def test_gradient_is_derivative(self):
        r = hyperbolic_regularizer(0.7)
        x, h = np.array([0.3, -1.1]), 1e-6
        num = (np.array([r.value(x + h * e) for e in np.eye(2)]) - r.value(x)) / h
        np.testing.assert_allclose(num, r.grad(x), atol=1e-4)

    def test_broken_inverse_rejected(self):
        bad = Regularizer("bad", lambda x: float(x @ x), lambda x: 2 * x, lambda y: y)
        with pytest.raises(ConfigError):
            bad.validate(3)

    def test_unknown(self):
        with pytest.raises(ConfigError):
            get_regularizer("entropic", 1.0)


class TestFTRL:
    @pytest.mark.parametrize("eta", [0.1, 1.0])
    def test_euclidean_equals_gcaci(self, rng, eta):
        G, tau = fuzzed_stream(rng, 1000)
        a = FTRLCoverage(q=0.9, eta=eta).fit(G, tau)
        b = GroupConditionalACI(q=0.9, eta=eta).fit(G, tau)
        np.testing.assert_allclose(a.predictions_, b.predictions_, atol=1e-9)

    def test_gradient_identity(self, rng):
        G, tau = fuzzed_stream(rng, 800, k=4)
        for reg in ("euclidean", "hyperbolic"):
            m = FTRLCoverage(q=0.8, eta=0.3, regularizer=reg).fit(G, tau)
            expect = G.T @ (0.8 - m.transcript().covered)
            np.testing.assert_allclose(m.regularizer_gradient_, expect, atol=1e-9)
            np.testing.assert_allclose(m.regularizer_.grad(m.theta_), expect, atol=1e-9)

    def test_functional_layer(self, rng):
        G, tau = fuzzed_stream(rng, 100, k=2)
        state = ftrl_init(2, 0.9, euclidean_regularizer(1.0))
        preds = []
        for g, s in zip(G, tau):
            p, state = ftrl_step(state, g, s)
            preds.append(p)
        m = FTRLCoverage(q=0.9, eta=1.0).fit(G, tau)
        np.testing.assert_allclose(preds, m.predictions_, atol=1e-12)
        np.testing.assert_allclose(state.regularizer_gradient, m.regularizer_gradient_)


class TestSwapLearner:
    def test_predictions_on_grid_and_seeded(self, rng):
        tau = rng.uniform(size=300)
        a = SwapRegretQuantile(n=10, random_state=3).fit(None, tau)
        b = SwapRegretQuantile(n=10, random_state=3).fit(None, tau)
        np.testing.assert_array_equal(a.predictions_, b.predictions_)
        assert np.allclose(a.predictions_ * 10, np.round(a.predictions_ * 10))

    def test_seed_independent_of_stream(self):
        tau = np.random.default_rng(0).uniform(size=2000)
        m = SwapRegretQuantile(n=20, random_state=0).fit(None, tau)
        assert abs(np.corrcoef(tau, m.predictions_)[0, 1]) < 0.1

    def test_distribution_is_stationary(self, rng):
        m = SwapRegretQuantile(n=8, random_state=0).fit(None, rng.uniform(size=200))
        p = m.distribution_
        assert p.sum() == pytest.approx(1.0) and np.all(p >= 0)
        assert m.max_stationarity_gap_ < 1e-8

    def test_concentrates_near_quantile(self, rng):
        m = SwapRegretQuantile(q=0.9, n=10, random_state=0).fit(None, rng.uniform(size=5000))
        assert m.state_.levels[np.argmax(m.distribution_)] == pytest.approx(0.9)

    def test_horizon_rate(self):
        s = swap_init(4, 0.5, horizon=100, random_state=0)
        assert s.learning_rate == pytest.approx(np.sqrt(np.log(5) / 100))
        s.update(0.3)
        assert s.learning_rate == pytest.approx(np.sqrt(np.log(5) / 100))
        anytime = swap_init(4, 0.5, random_state=0)
        for _ in range(4):
            anytime.update(0.3)
        assert anytime.learning_rate == pytest.approx(np.sqrt(np.log(5) / 4))

    def test_power_iteration_failure_is_diagnosed(self):
        flip = np.array([[0.0, 1.0], [1.0, 0.0]])
        with pytest.raises(NumericalError, match="did not converge"):
            stationary_distribution(flip, np.array([1.0, 0.0]), max_iter=50)

    def test_power_iteration_fixed_point(self, rng):
        Q = rng.uniform(size=(6, 6))
        Q /= Q.sum(axis=1, keepdims=True)
        p = stationary_distribution(Q)
        np.testing.assert_allclose(p @ Q, p, atol=1e-9)


class TestScripted:
    def test_replays(self):
        m = ScriptedPredictor([0.1, 0.9], q=0.5).fit(None, [0.5, 0.5])
        assert m.predictions_.tolist() == [0.1, 0.9]

    def test_exhausted(self):
        with pytest.raises(DataError):
            ScriptedPredictor([0.1], q=0.5).fit(None, [0.5, 0.5])

    def test_needs_script(self):
        with pytest.raises(ConfigError):
            ScriptedPredictor(q=0.5).fit(None, [0.5])
