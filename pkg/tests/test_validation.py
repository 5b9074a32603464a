"""Lemma expansion checks, Wilson intervals, and the Monte Carlo tail lane.

The Brownian half of the MC lane has a genuinely external yardstick: at
H = 1/2 the continuum drawdown/drawup tails of the trended path follow from
the Sturm-Liouville expansion in tests/_brownian_exact.py.  Those values
were evaluated once, checked for convergence in the mode count, and frozen
here; grid estimates must sit below them (a grid restriction of an exact
law can only lose mass) but within a modest discretization allowance.
"""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _brownian_exact import exact_rbm_hit
from fbmlab.asymptotics import asym_drawdown, asym_drawup
from fbmlab.engine import ModelParams
from fbmlab.paths import TailQuery
from fbmlab.validation import (
    LemmaCheckReport,
    McEstimate,
    Z95,
    _extrapolate,
    _halving_schedule,
    check_lemma1,
    check_lemma2,
    check_lemma3,
    convergence_study,
    functional_sups,
    functional_sups_nested,
    mc_tail,
    refinement_seed,
    wilson_interval,
)

# Continuum tails at H = 1/2, mu = 0, T = 1 (trended path B_t - t/2), from
# the eigenexpansion helper, converged in the mode count to full precision.
EXACT_DD_HALF = {
    1.5: 0.42646068867805487,
    2.0: 0.18964920804020124,
    2.5: 0.067429913142060038,
}
EXACT_DU_HALF = {
    1.5: 0.14753483573246184,
    2.0: 0.037300021438645303,
    2.5: 0.0076491909931873936,
}

HALF = ModelParams(0.5, 0.0, 1.0)


class TestWilsonInterval:
    def test_spot_value(self):
        lo, hi = wilson_interval(5, 10)
        assert lo == pytest.approx(0.236593090512564, rel=1e-12)
        assert hi == pytest.approx(0.763406909487436, rel=1e-12)

    def test_zero_successes_rule_of_three(self):
        lo, hi = wilson_interval(0, 1000)
        assert lo == 0.0
        assert hi == pytest.approx(0.0038267584855551232, rel=1e-12)

    def test_all_successes_pins_upper_end(self):
        lo, hi = wilson_interval(1000, 1000)
        assert hi == 1.0
        assert 0.99 < lo < 1.0

    def test_rejects_empty_sample(self):
        with pytest.raises(ValueError, match="need n > 0"):
            wilson_interval(3, 0)

    @pytest.mark.parametrize("k", [-1, 11])
    def test_rejects_out_of_range_k(self, k):
        with pytest.raises(ValueError, match="0 <= k <= n"):
            wilson_interval(k, 10)

    @settings(max_examples=80, deadline=None)
    @given(
        st.integers(1, 2000).flatmap(
            lambda n: st.tuples(st.just(n), st.integers(0, n))
        )
    )
    def test_contains_point_estimate(self, kn):
        n, k = kn
        lo, hi = wilson_interval(k, n)
        assert 0.0 <= lo <= k / n <= hi <= 1.0

    def test_coverage_on_seeded_bernoulli(self):
        # Nominal 95% coverage; Wilson at n = 400, p = 0.3 runs very close
        # to nominal, so 93/100 leaves room for this seed's binomial noise.
        rng = np.random.default_rng(99)
        covered = 0
        for _ in range(100):
            k = rng.binomial(400, 0.3)
            lo, hi = wilson_interval(int(k), 400)
            covered += lo <= 0.3 <= hi
        assert covered >= 93


class TestMcEstimateRecord:
    def test_holds_its_fields(self):
        fine = McEstimate(0.11, 0.1, 0.12, 5000, 256)
        est = McEstimate(0.1, 0.09, 0.11, 5000, 128, extrapolated=0.12, refined=fine)
        assert est.refined.n_steps == 256
        assert est.extrapolated == 0.12

    @pytest.mark.parametrize(
        "p, lo, hi",
        [
            (0.5, 0.6, 0.7),  # lo above p
            (0.5, 0.4, 0.45),  # hi below p
            (0.5, -0.1, 0.6),  # lo below 0
            (0.5, 0.4, 1.1),  # hi above 1
        ],
    )
    def test_rejects_disordered_interval(self, p, lo, hi):
        with pytest.raises(ValueError, match="0 <= lo <= p <= hi <= 1"):
            McEstimate(p, lo, hi, 100, 64)


class TestHalvingSchedule:
    def test_accepts_halving_per_decade(self):
        assert _halving_schedule((1e2, 1e3), (1e-2, 4e-3))

    def test_rejects_too_slow_decay(self):
        # One decade allows e1 * 1.25 / 2 = 6.25e-3 at the next rung.
        assert not _halving_schedule((1e2, 1e3), (1e-2, 7e-3))

    def test_rejects_nonmonotone_errors(self):
        assert not _halving_schedule((1e2, 1e3), (1e-2, 1.1e-2))

    def test_rejects_nonfinite(self):
        assert not _halving_schedule((1e2, 1e3), (1e-2, math.inf))
        assert not _halving_schedule((1e2, 1e3), (math.nan, 1e-3))

    def test_three_rung_ladder(self):
        assert _halving_schedule((1e2, 1e3, 1e4), (8e-3, 3e-3, 1.2e-3))
        assert not _halving_schedule((1e2, 1e3, 1e4), (8e-3, 3e-3, 2.9e-3))


class TestLemmaCheckReport:
    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError, match="one error per ladder point"):
            LemmaCheckReport("lemma1", (1e2, 1e3), (0.01,), True)

    @pytest.mark.parametrize("bad", [-1e-3, math.nan, math.inf])
    def test_rejects_bad_errors(self, bad):
        with pytest.raises(ValueError, match="finite and >= 0"):
            LemmaCheckReport("lemma1", (1e2,), (bad,), True)

    def test_to_dict_is_json_ready(self):
        report = LemmaCheckReport("lemma3", (1e-2, 1e-3), (0.02, 0.009), True, "ok")
        doc = json.loads(json.dumps(report.to_dict()))
        assert doc["lemma"] == "lemma3"
        assert doc["u_grid"] == [1e-2, 1e-3]
        assert doc["max_rel_error"] == [0.02, 0.009]
        assert doc["passed"] is True
        assert doc["detail"] == "ok"


class TestLemma1:
    def test_frozen_worst_error_at_h_half(self):
        # Independent direct evaluation of both sides on the same box froze
        # this number; it guards the expansion code against silent edits.
        report = check_lemma1(HALF, u=(1e3,), delta=1e-3)
        assert report.lemma == "lemma1"
        assert report.max_rel_error[0] == pytest.approx(
            0.0012501244528048147, rel=1e-9
        )

    @pytest.mark.parametrize("H", [0.25, 0.4, 0.5, 0.75])
    def test_ladder_passes(self, H):
        report = check_lemma1(ModelParams(H, 0.0, 1.0))
        assert report.passed, report.max_rel_error
        errs = report.max_rel_error
        assert all(b < a for a, b in zip(errs, errs[1:]))

    def test_trend_does_not_break_the_expansion(self):
        assert check_lemma1(ModelParams(0.5, 0.2, 1.0)).passed
        assert check_lemma1(ModelParams(0.75, -0.1, 2.0)).passed

    def test_rejects_small_thresholds(self):
        with pytest.raises(ValueError, match="u >= 100"):
            check_lemma1(HALF, u=(50.0,))

    @pytest.mark.parametrize("delta", [0.0, 0.6, -0.1])
    def test_rejects_bad_delta(self, delta):
        with pytest.raises(ValueError, match="0 < delta < T/2"):
            check_lemma1(HALF, delta=delta)


class TestLemma2:
    @pytest.mark.parametrize(
        "H, name", [(0.75, "lemma2i"), (0.5, "lemma2i"), (0.25, "lemma2ii")]
    )
    def test_variant_dispatch(self, H, name):
        report = check_lemma2(ModelParams(H, 0.0, 1.0))
        assert report.lemma == name

    @pytest.mark.parametrize("H", [0.25, 0.4, 0.5, 0.75])
    def test_ladder_passes(self, H):
        report = check_lemma2(ModelParams(H, 0.0, 1.0))
        assert report.passed, report.max_rel_error

    def test_trend_does_not_break_the_expansion(self):
        assert check_lemma2(ModelParams(0.75, 0.2, 1.0)).passed
        assert check_lemma2(ModelParams(0.4, -0.1, 1.0)).passed

    def test_rejects_bad_delta(self):
        with pytest.raises(ValueError, match="0 < delta < T/2"):
            check_lemma2(HALF, delta=0.5)


class TestLemma3:
    @pytest.mark.parametrize("H", [0.25, 0.4, 0.5, 0.75])
    def test_ladder_passes(self, H):
        report = check_lemma3(H)
        assert report.lemma == "lemma3"
        assert report.u_grid == (1e-2, 1e-3, 1e-4)
        assert report.passed, report.max_rel_error

    def test_default_boxes_scale_with_horizon(self):
        report = check_lemma3(0.5, T=2.0)
        assert report.u_grid == (2e-2, 2e-3, 2e-4)
        assert report.passed

    @pytest.mark.parametrize("H", [0.0, 1.0, 1.5])
    def test_rejects_bad_hurst(self, H):
        with pytest.raises(ValueError, match="0 < H < 1"):
            check_lemma3(H)

    def test_rejects_oversized_boxes(self):
        with pytest.raises(ValueError, match="T/100"):
            check_lemma3(0.5, delta=0.02)

    def test_seed_controls_the_sample(self):
        a = check_lemma3(0.4, seed=1)
        b = check_lemma3(0.4, seed=1)
        c = check_lemma3(0.4, seed=2)
        assert a.max_rel_error == b.max_rel_error
        assert a.max_rel_error != c.max_rel_error


class TestRefinementSeed:
    def test_deterministic_and_distinct_from_base(self):
        for seed in range(10):
            derived = refinement_seed(seed)
            assert derived == refinement_seed(seed)
            assert derived != seed
            assert derived >= 0

    def test_separates_seeds(self):
        derived = {refinement_seed(s) for s in range(50)}
        assert len(derived) == 50


class TestFunctionalSups:
    def test_deterministic_and_thread_invariant(self):
        params = ModelParams(0.7, 0.1, 1.0)
        dd1, du1 = functional_sups(params, 600, 64, seed=3)
        dd2, du2 = functional_sups(params, 600, 64, seed=3)
        dd3, du3 = functional_sups(params, 600, 64, seed=3, threads=2)
        assert np.array_equal(dd1, dd2) and np.array_equal(du1, du2)
        assert np.array_equal(dd1, dd3) and np.array_equal(du1, du3)

    def test_shapes_and_signs(self):
        dd, du = functional_sups(HALF, 300, 32, seed=4)
        assert dd.shape == du.shape == (300,)
        assert dd.dtype == du.dtype == np.float64
        assert (dd >= 0.0).all() and (du >= 0.0).all()

    def test_cholesky_draws_differ_from_circulant(self):
        dd_c, _ = functional_sups(HALF, 200, 32, seed=5)
        dd_k, _ = functional_sups(HALF, 200, 32, seed=5, method="cholesky")
        assert np.isfinite(dd_k).all()
        assert not np.array_equal(dd_c, dd_k)

    def test_nested_levels_are_coupled_pathwise(self):
        dd_c, du_c, dd_f, du_f = functional_sups_nested(HALF, 500, 64, seed=6)
        assert (dd_c <= dd_f).all()
        assert (du_c <= du_f).all()
        # Strict somewhere, or the restriction did nothing.
        assert (dd_c < dd_f).any() and (du_c < du_f).any()

    def test_nested_fine_level_is_a_plain_run_at_double_steps(self):
        _, _, dd_f, du_f = functional_sups_nested(HALF, 400, 64, seed=9)
        dd_p, du_p = functional_sups(HALF, 400, 128, seed=9)
        assert np.array_equal(dd_f, dd_p)
        assert np.array_equal(du_f, du_p)

    @pytest.mark.parametrize("n_steps", [0, 1, 63])
    def test_nested_rejects_odd_or_tiny_grids(self, n_steps):
        with pytest.raises(ValueError, match="even and >= 2"):
            functional_sups_nested(HALF, 10, n_steps, seed=0)


class TestMcTail:
    def test_certain_event(self):
        query = TailQuery("drawdown", 1e-9, HALF)
        est = mc_tail(query, 1500, 64, seed=8)
        assert est.p_hat == 1.0
        assert est.ci_high == 1.0
        assert est.ci_low < 1.0
        assert est.n_paths == 1500 and est.n_steps == 64
        assert est.refined.n_steps == 128
        assert est.refined.p_hat == 1.0
        assert est.extrapolated == 1.0

    def test_impossible_event(self):
        query = TailQuery("drawup", 50.0, HALF)
        est = mc_tail(query, 1500, 64, seed=8)
        assert est.p_hat == 0.0
        assert est.ci_low == 0.0
        assert (est.ci_low, est.ci_high) == wilson_interval(0, 1500)
        assert est.extrapolated == 0.0

    def test_refined_run_uses_the_derived_seed(self):
        query = TailQuery("drawup", 0.8, HALF)
        est = mc_tail(query, 800, 64, seed=21)
        sups = functional_sups(HALF, 800, 128, refinement_seed(21))[1]
        k = int((sups > 0.8).sum())
        assert est.refined.p_hat == k / 800


class TestExtrapolate:
    def test_linear_at_h_one(self):
        assert _extrapolate(0.10, 0.12, 1.0) == pytest.approx(0.14, rel=1e-15)

    def test_clips_at_zero(self):
        assert _extrapolate(0.5, 0.2, 0.5) == 0.0

    def test_clips_at_one(self):
        assert _extrapolate(0.2, 0.9, 0.5) == 1.0


@pytest.fixture(scope="module")
def brownian_sups():
    return functional_sups(HALF, 30000, 2048, seed=20260822)


class TestAgainstExactBrownian:
    """Law-level check of the whole sampling lane at H = 1/2."""

    def test_expansion_reproduces_frozen_values(self):
        for u, p in EXACT_DD_HALF.items():
            assert exact_rbm_hit(u, -0.5, 1.0) == pytest.approx(p, rel=1e-10)
        for u, p in EXACT_DU_HALF.items():
            assert exact_rbm_hit(u, +0.5, 1.0) == pytest.approx(p, rel=1e-10)

    def test_degenerate_mode_joins_continuously(self):
        # c*u = 1 sits exactly on the trig/hyperbolic boundary of the
        # spectrum; the linear mode must interpolate both neighbours.
        mid = exact_rbm_hit(2.0, 0.5, 1.0)
        assert abs(exact_rbm_hit(2.0, 0.5 - 1e-6, 1.0) - mid) < 2e-6
        assert abs(exact_rbm_hit(2.0, 0.5 + 1e-6, 1.0) - mid) < 2e-6

    def test_expansion_limits(self):
        assert exact_rbm_hit(1e-3, 0.5, 1.0) > 0.999
        tails = [exact_rbm_hit(u, 0.5, 1.0) for u in (1.5, 2.0, 2.5)]
        assert tails[0] > tails[1] > tails[2]

    @pytest.mark.parametrize("u", [1.5, 2.0])
    def test_mc_drawdown_sits_below_continuum_within_allowance(
        self, brownian_sups, u
    ):
        dd, _ = brownian_sups
        p_hat = float((dd > u).mean())
        exact = EXACT_DD_HALF[u]
        se = math.sqrt(exact * (1.0 - exact) / len(dd))
        assert p_hat <= exact + 4.0 * se
        assert p_hat >= 0.90 * exact - 4.0 * se

    @pytest.mark.parametrize("u", [1.5, 2.0])
    def test_mc_drawup_sits_below_continuum_within_allowance(
        self, brownian_sups, u
    ):
        _, du = brownian_sups
        p_hat = float((du > u).mean())
        exact = EXACT_DU_HALF[u]
        se = math.sqrt(exact * (1.0 - exact) / len(du))
        assert p_hat <= exact + 4.0 * se
        assert p_hat >= 0.90 * exact - 4.0 * se


class TestConvergenceStudy:
    def test_rejects_unknown_functional(self, stub_constants):
        with pytest.raises(ValueError, match="functional must be one of"):
            convergence_study(
                "runup", HALF, (1.5,), n_paths=10, n_steps=8, seed=0,
                constants=stub_constants,
            )

    @pytest.mark.parametrize("ladder", [(), (2.0, 1.5), (1.5, 1.5)])
    def test_rejects_bad_ladders(self, stub_constants, ladder):
        with pytest.raises(ValueError, match="nonempty and increasing"):
            convergence_study(
                "drawdown", HALF, ladder, n_paths=10, n_steps=8, seed=0,
                constants=stub_constants,
            )

    def test_drawdown_table_is_internally_consistent(self, stub_constants):
        table = convergence_study(
            "drawdown", HALF, (1.2, 1.6),
            n_paths=6000, n_steps=128, seed=7, constants=stub_constants,
        )
        assert table.functional == "drawdown"
        assert [row.u for row in table.rows] == [1.2, 1.6]
        # One shared simulation serves the whole ladder, so exceedance can
        # only shrink as u grows.
        assert table.rows[0].p_hat >= table.rows[1].p_hat
        for row in table.rows:
            asym = asym_drawdown(row.u, HALF, stub_constants)
            assert row.asym_probability == asym.probability
            assert row.ratio == row.p_hat / row.asym_probability
            assert row.ratio_ci_low == row.ci_low / row.asym_probability
            assert row.ratio_ci_high == row.ci_high / row.asym_probability
            assert row.ratio_refined == row.p_refined / row.asym_probability
            assert 0.0 <= row.extrapolated <= 1.0
            assert row.ci_low <= row.p_hat <= row.ci_high
        assert isinstance(table.trend_nondecreasing, bool)
        assert isinstance(table.trend_toward_one, bool)

    def test_single_point_ladder_has_no_trend_verdict(self, stub_constants):
        table = convergence_study(
            "drawdown", HALF, (1.5,),
            n_paths=800, n_steps=64, seed=11, constants=stub_constants,
        )
        assert table.trend_nondecreasing is None
        assert table.trend_toward_one is None

    def test_drawup_variant_reaches_the_asymptotics(self, stub_constants):
        params = ModelParams(0.3, 0.0, 1.7)
        kwargs = dict(n_paths=800, n_steps=64, seed=13, constants=stub_constants)
        proof = convergence_study("drawup", params, (2.0,), **kwargs)
        stmt = convergence_study(
            "drawup", params, (2.0,), variant="statement", **kwargs
        )
        assert stmt.rows[0].p_hat == proof.rows[0].p_hat
        assert stmt.rows[0].asym_probability == pytest.approx(
            proof.rows[0].asym_probability * 1.7 * 1.7, rel=1e-13
        )
