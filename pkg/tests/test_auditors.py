import json

import numpy as np
import pytest
from conftest import fuzzed_stream
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import (empirical_quantile, external_regret_loop, smoothness_scan,
                     swap_regret_enumerate)

from onlinecov import auditors
from onlinecov.auditors import (check_norm_envelope, check_theorem_bounds, coverage,
                                external_regret, group_conditional_regret, group_coverage,
                                multivalid_coverage, reports_to_json, smoothness_estimate,
                                swap_regret, threshold_calibrated_coverage, write_report_csv)
from onlinecov.core import Grid, GroupSpec, Transcript
from onlinecov.environments import example1_stream
from onlinecov.exceptions import ConfigError, DataError
from onlinecov.learners import FTRLCoverage, GroupConditionalACI


def random_transcript(rng, T, n=None, k=2, q=None):
    q = q if q is not None else float(rng.choice([0.1, 0.5, 0.9]))
    tau = rng.uniform(size=T)
    hat = rng.integers(0, n + 1, T) / n if n else rng.uniform(-0.1, 1.1, T)
    G = (rng.uniform(size=(T, k)) < 0.6).astype(float)
    return Transcript(G, tau, hat, q)


class TestCoverage:
    def test_values(self, small_transcript):
        assert coverage(small_transcript) == 0.75
        rep = group_coverage(small_transcript)
        assert rep["a"].coverage == pytest.approx(2 / 3)
        assert rep["b"].size == 3 and rep["b"].coverage == pytest.approx(2 / 3)
        assert rep["a"].deviation == pytest.approx(abs(2 / 3 - 0.9))

    def test_empty_group_is_undefined(self):
        tr = Transcript(np.array([[1.0, 0.0]] * 3), [0.1] * 3, [0.2] * 3, 0.5)
        e = group_coverage(tr)["g_2"]
        assert e.size == 0 and e.coverage is None and e.deviation is None
        assert [x.entity for x in group_coverage(tr).defined()] == ["g_1"]

    def test_empty_transcript(self):
        with pytest.raises(DataError):
            coverage(Transcript.empty(1, 0.5))

    def test_marginal_is_weighted_average_of_partition(self, rng):
        T = 400
        part = rng.integers(0, 3, T)
        G = np.eye(3)[part]
        tr = Transcript(G, rng.uniform(size=T), rng.uniform(size=T), 0.7)
        rep = group_coverage(tr)
        avg = sum(e.size * e.coverage for e in rep.defined()) / T
        assert avg == pytest.approx(coverage(tr))

    def test_threshold_levels_partition_rounds(self, rng):
        tr = random_transcript(rng, 300)
        rep = threshold_calibrated_coverage(tr, 10)
        assert sum(e.size for e in rep.entries) == 300
        assert rep.entries[0].entity == "0" and rep.entries[-1].entity == "1"

    def test_multivalid_names_and_sizes(self, rng):
        tr = random_transcript(rng, 200, n=4)
        rep = multivalid_coverage(tr, 4)
        assert len(rep.entries) == 2 * 5
        assert rep.entries[6].entity == "g_2@0.25"
        assert sum(e.size for e in rep.entries[:5]) == tr.g[:, 0].sum()

    def test_groups_as_specs_see_prefix(self, rng):
        tr = random_transcript(rng, 30, k=1)
        seen = []

        def gen(t, past):
            seen.append(len(past))
            return 1.0 if len(past) and past.covered[-1] else 0.0

        rep = group_coverage(tr, [GroupSpec("after_hit", "binary", gen)])
        assert seen == list(range(30))
        mask = np.r_[False, tr.covered[:-1]]
        assert rep.entries[0].size == mask.sum()


class TestRegret:
    @pytest.mark.parametrize("seed", range(5))
    def test_external_matches_loop(self, seed):
        rng = np.random.default_rng(seed)
        tr = random_transcript(rng, 60)
        expect = external_regret_loop(tr.tau.tolist(), tr.tau_hat.tolist(), tr.q, 8)
        assert external_regret(tr, 8).value == pytest.approx(expect, abs=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_swap_matches_enumeration(self, seed):
        rng = np.random.default_rng(100 + seed)
        n = int(rng.integers(1, 4))
        tr = random_transcript(rng, int(rng.integers(1, 13)), n=n)
        expect = swap_regret_enumerate(tr.tau.tolist(), tr.tau_hat.tolist(), tr.q, n)
        assert swap_regret(tr, n).value == pytest.approx(expect, abs=1e-12)

    @given(st.integers(0, 2**31), st.integers(1, 12))
    @settings(max_examples=60, deadline=None)
    def test_swap_dominates_external(self, seed, n):
        tr = random_transcript(np.random.default_rng(seed), 80, n=n)
        assert swap_regret(tr, n).value >= external_regret(tr, n).value - 1e-12

    def test_swap_comparator_map(self):
        tr = example1_stream(8).scripted_transcript(0.5)
        phi = swap_regret(tr, 20).entries[0].comparator
        assert phi == {"0.4": "0.5", "0.9": "1"}

    def test_regret_ignores_group_names(self, rng):
        tr = random_transcript(rng, 100, n=5)
        renamed = tr.with_names(("x", "y"))
        assert swap_regret(tr, 5).value == swap_regret(renamed, 5).value
        assert external_regret(tr, 5).value == external_regret(renamed, 5).value
        a = group_conditional_regret(tr, 5, "swap")
        b = group_conditional_regret(renamed, 5, "swap")
        assert [e.value for e in a.entries] == [e.value for e in b.entries]

    def test_group_regret_on_all_ones_matches_marginal(self, rng):
        tr = Transcript(np.ones((90, 1)), rng.uniform(size=90), rng.uniform(size=90), 0.9)
        assert group_conditional_regret(tr, 10, "external").value == pytest.approx(
            external_regret(tr, 10).value)
        assert group_conditional_regret(tr, 10, "swap").value == pytest.approx(
            swap_regret(tr, 10).value)

    def test_group_swap_needs_binary(self, rng):
        tr = Transcript(rng.uniform(size=(10, 2)), rng.uniform(size=10), rng.uniform(size=10), 0.5)
        with pytest.raises(ConfigError):
            group_conditional_regret(tr, 4, "swap")
        with pytest.raises(ConfigError):
            group_conditional_regret(tr, 4, "other")


class TestSmoothness:
    @pytest.mark.parametrize("seed", range(8))
    def test_matches_interval_scan(self, seed):
        rng = np.random.default_rng(seed)
        x = np.round(rng.uniform(size=int(rng.integers(1, 40))), int(rng.integers(1, 4)))
        r = int(rng.integers(1, 12))
        prof = smoothness_estimate(x, r)
        alpha, rho = smoothness_scan(x.tolist(), r)
        assert prof.alpha == pytest.approx(alpha) and prof.rho == pytest.approx(rho)

    def test_uniform_grid(self):
        x = (np.arange(1000) + 0.5) / 1000
        prof = smoothness_estimate(x, 10)
        # closed windows: one starting on a point also reaches the point 1/r later
        assert prof.rho == pytest.approx(0.101) and prof.alpha == pytest.approx(0.1)

    def test_point_mass(self):
        prof = smoothness_estimate(np.full(50, 0.3), 10)
        assert prof.rho == 1.0 and prof.alpha == 0.0

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=60), st.integers(1, 20),
           st.integers(1, 20))
    @settings(max_examples=80, deadline=None)
    def test_coarser_resolution_never_lowers_rho(self, x, r1, r2):
        lo, hi = sorted((r1, r2))
        assert smoothness_estimate(x, lo).rho >= smoothness_estimate(x, hi).rho - 1e-12

    def test_rejects(self):
        with pytest.raises(DataError):
            smoothness_estimate([], 5)
        with pytest.raises(DataError):
            smoothness_estimate([1.2], 5)


class TestChecks:
    @given(st.integers(0, 2**31), st.sampled_from([0.5, 0.9, 0.95]), st.sampled_from([0.1, 1.0]))
    @settings(max_examples=30, deadline=None)
    def test_gcaci_bound_always_holds(self, seed, q, eta):
        G, tau = fuzzed_stream(np.random.default_rng(seed), 200)
        m = GroupConditionalACI(q=q, eta=eta).fit(G, tau)
        c = check_theorem_bounds(m.transcript(), "gcaci_group_coverage", theta=m.theta_, eta=eta)
        assert c.status in ("pass", "vacuous")
        assert all(e.status != "fail" for e in c.entries)

    def test_gcaci_theta_rebuilt_from_transcript(self, rng):
        G, tau = fuzzed_stream(rng, 300, k=3, weighted=False)
        m = GroupConditionalACI(q=0.9, eta=0.5).fit(G, tau)
        a = check_theorem_bounds(m.transcript(), "gcaci_group_coverage", eta=0.5)
        b = check_theorem_bounds(m.transcript(), "gcaci_group_coverage", theta=m.theta_, eta=0.5)
        assert a.details["coordinate_bound"] == pytest.approx(b.details["coordinate_bound"])

    def test_ftrl_bound(self, rng):
        G, tau = fuzzed_stream(rng, 500, k=4)
        m = FTRLCoverage(q=0.9, regularizer="hyperbolic", eta=0.5).fit(G, tau)
        c = check_theorem_bounds(m.transcript(), "ftrl_group_coverage",
                                 grad=m.regularizer_gradient_)
        assert c.passed and c.min_slack >= -1e-9

    def test_vacuous_without_mass(self):
        tr = Transcript(np.ones((20, 1)), np.full(20, 0.5), np.full(20, 0.5), 0.9)
        c = check_theorem_bounds(tr, "stochastic_external_coverage", grid=10, r=10)
        assert c.status == "vacuous" and c.entries[0].bound is None

    def test_swap_checks_on_smooth_transcript(self, rng):
        T = 4000
        tau = rng.uniform(size=T)
        tr = Transcript(np.ones((T, 1)), tau, rng.integers(0, 11, T) / 10, 0.5)
        for name in ("swap_to_calibrated", "calibrated_to_swap",
                     "group_swap_to_multivalid", "multivalid_to_group_swap"):
            c = check_theorem_bounds(tr, name, grid=10, r=5, min_size=100)
            assert c.status == "pass", name

    def test_quantile_gap_matches_brute_force(self, rng):
        tau = rng.uniform(size=400)
        tr = Transcript(np.ones((400, 1)), tau, tau, 0.8)
        c = check_theorem_bounds(tr, "quantile_loss_gap", grid=10, r=5)
        star = empirical_quantile(tau.tolist(), 0.8)
        assert c.details["quantile"] == pytest.approx(star)
        assert c.status in ("pass", "vacuous") and all(e.status != "fail" for e in c.entries)
        assert any(e.status == "pass" for e in c.entries)
        e0 = c.entries[0]
        realized = np.mean([0.8 * t for t in tau]) - np.mean(
            [0.8 * (t - star) if t >= star else -0.2 * (t - star) for t in tau])
        assert e0.bound == pytest.approx(realized)

    def test_binary_checks_reject_weights(self, rng):
        tr = Transcript(rng.uniform(size=(30, 2)), rng.uniform(size=30), rng.uniform(size=30), 0.5)
        with pytest.raises(ConfigError):
            check_theorem_bounds(tr, "group_swap_to_multivalid", grid=4)

    def test_dispatch_errors(self, small_transcript):
        with pytest.raises(ConfigError, match="unknown check"):
            check_theorem_bounds(small_transcript, "nope")
        with pytest.raises(ConfigError, match="grid"):
            check_theorem_bounds(small_transcript, "swap_to_calibrated")
        with pytest.raises(ConfigError):
            check_theorem_bounds(small_transcript, "gcaci_group_coverage")
        with pytest.raises(ConfigError):
            check_theorem_bounds(small_transcript, "norm_envelope")

    def test_every_named_check_runs(self, rng):
        G, tau = fuzzed_stream(rng, 300, k=2, weighted=False)
        m = GroupConditionalACI(eta=0.5).fit(G, tau)
        for name in auditors.THEOREMS:
            c = check_theorem_bounds(m.transcript(), name, grid=10, r=5, eta=0.5)
            assert c.status in ("pass", "fail", "vacuous")
            json.dumps(c.to_dict(), default=float)

    def test_norm_envelope_detects_violation(self):
        path = np.array([[0.0], [5.0]])
        c = check_norm_envelope(path, 0.9, 1.0)
        assert c.status == "fail" and c.details["violations"] == 1


def test_report_serialization(tmp_path, rng):
    tr = random_transcript(rng, 100, n=5)
    reports = {"cov": group_coverage(tr), "swap": swap_regret(tr, 5),
               "check": check_theorem_bounds(tr, "swap_to_calibrated", grid=5, r=5)}
    data = json.loads(reports_to_json(reports))
    assert set(data) == {"cov", "swap", "check"}
    for name, rep in reports.items():
        path = tmp_path / f"{name}.csv"
        write_report_csv(rep, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "entity,size,value,bound,slack"
        assert "np.float64" not in path.read_text()
