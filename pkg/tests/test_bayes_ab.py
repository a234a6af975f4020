import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from clickcascade.bayes_ab import (
    ArmStats,
    BetaPosterior,
    decide,
    normal_ppf,
    posterior_from_counts,
    prob_b_beats_a,
    prob_b_beats_a_betaln,
    prob_b_beats_a_mc,
    uplift,
    z_statistic,
    z_test,
)
from clickcascade.errors import InvalidInputError


def quad_oracle(a: BetaPosterior, b: BetaPosterior) -> float:
    """P(p_B > p_A) = integral of f_B(x) F_A(x) over [0, 1], by adaptive quadrature."""
    fb, Fa = stats.beta(b.alpha, b.beta).pdf, stats.beta(a.alpha, a.beta).cdf
    lo, hi = stats.beta(b.alpha, b.beta).ppf([1e-15, 1 - 1e-15])
    val, _ = integrate.quad(lambda x: fb(x) * Fa(x), lo, hi, epsabs=1e-13, epsrel=1e-12, limit=400)
    return val


class TestPosterior:
    @pytest.mark.parametrize("c,f,ab", [(0, 0, (1, 1)), (5, 10, (6, 11)), (0, 100, (1, 101))])
    def test_flat_prior(self, c, f, ab):
        post = posterior_from_counts(ArmStats(c, f))
        assert (post.alpha, post.beta) == ab

    def test_guards(self):
        with pytest.raises(InvalidInputError):
            ArmStats(-1, 3)
        with pytest.raises(InvalidInputError):
            ArmStats.from_impressions(5, 4)
        with pytest.raises(InvalidInputError):
            BetaPosterior(0, 1)

    def test_from_impressions(self):
        s = ArmStats.from_impressions(201, 14342)
        assert (s.clicks, s.failures, s.impressions) == (201, 14141, 14342)


class TestClosedForm:
    def test_symmetric(self):
        assert abs(prob_b_beats_a(BetaPosterior(1, 1), BetaPosterior(1, 1)) - 0.5) < 1e-12

    def test_two_thirds(self):
        assert abs(prob_b_beats_a(BetaPosterior(1, 1), BetaPosterior(2, 1)) - 2 / 3) < 1e-9

    def test_against_mc(self):
        a, b = BetaPosterior(21, 81), BetaPosterior(31, 71)
        assert abs(prob_b_beats_a(a, b) - prob_b_beats_a_mc(a, b, 1_000_000, seed=1)) < 0.005

    @pytest.mark.parametrize("a,b", [((3, 7), (5, 4)), ((120, 880), (140, 860)), ((1, 50), (2, 60)),
                                     ((400, 9600), (450, 9550)), ((9, 2), (3, 8))])
    def test_against_quadrature(self, a, b):
        a, b = BetaPosterior(*a), BetaPosterior(*b)
        assert prob_b_beats_a(a, b) == pytest.approx(quad_oracle(a, b), abs=1e-8)

    @pytest.mark.parametrize("c,f", [(0, 0), (5, 10), (200, 14000), (5000, 5000), (10_000, 1), (1, 10_000)])
    def test_identical_posteriors(self, c, f):
        post = posterior_from_counts(ArmStats(c, f))
        assert abs(prob_b_beats_a(post, post) - 0.5) < 1e-12

    @given(st.integers(1, 3000), st.integers(1, 3000), st.integers(1, 3000), st.integers(1, 3000))
    @settings(max_examples=60, deadline=None)
    def test_complementarity(self, aa, ba, ab, bb):
        a, b = BetaPosterior(aa, ba), BetaPosterior(ab, bb)
        assert abs(prob_b_beats_a(a, b) + prob_b_beats_a(b, a) - 1) < 1e-9

    @given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 500), st.integers(0, 500))
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_b_clicks(self, ca, fa, cb, fb):
        a = posterior_from_counts(ArmStats(ca, fa))
        p0 = prob_b_beats_a(a, posterior_from_counts(ArmStats(cb, fb)))
        p1 = prob_b_beats_a(a, posterior_from_counts(ArmStats(cb + 1, fb)))
        assert p1 >= p0 - 1e-12

    def test_large_counts(self):
        a = posterior_from_counts(ArmStats(10_000, 990_000))
        b = posterior_from_counts(ArmStats(10_300, 989_700))
        p = prob_b_beats_a(a, b)
        assert math.isfinite(p) and 0.98 < p < 1
        assert abs(prob_b_beats_a(a, a) - 0.5) < 1e-10
        assert abs(p + prob_b_beats_a(b, a) - 1) < 1e-9
        assert p == pytest.approx(quad_oracle(a, b), abs=1e-7)

    def test_betaln_variant_agrees(self):
        a, b = BetaPosterior(21, 81), BetaPosterior(31, 71)
        assert prob_b_beats_a_betaln(a, b) == pytest.approx(prob_b_beats_a(a, b), abs=1e-12)

    def test_non_integer_rejected(self):
        with pytest.raises(InvalidInputError, match="prob_b_beats_a_mc"):
            prob_b_beats_a(BetaPosterior(1, 1), BetaPosterior(1.5, 1))


class TestMonteCarlo:
    def test_identical(self):
        p = BetaPosterior(30, 70)
        assert abs(prob_b_beats_a_mc(p, p, 1_000_000, seed=3) - 0.5) < 0.002

    def test_dominant(self):
        assert prob_b_beats_a_mc(BetaPosterior(1, 100), BetaPosterior(100, 1), 100_000) >= 0.999

    def test_deterministic(self):
        a, b = BetaPosterior(3, 4), BetaPosterior(4, 3)
        assert prob_b_beats_a_mc(a, b, 1000, 5) == prob_b_beats_a_mc(a, b, 1000, 5)

    def test_twenty_random_pairs(self):
        gen = np.random.default_rng(20)
        for i in range(20):
            a = BetaPosterior(*gen.integers(1, 300, size=2).tolist())
            b = BetaPosterior(*gen.integers(1, 300, size=2).tolist())
            exact = prob_b_beats_a(a, b)
            est = prob_b_beats_a_mc(a, b, 200_000, seed=i)
            se = math.sqrt(max(exact * (1 - exact), 1e-12) / 200_000)
            assert abs(exact - est) < max(3 * se, 1e-4)


class TestUplift:
    def test_examples(self):
        assert uplift(0.10, 0.12) == pytest.approx(0.2, abs=1e-15)
        assert uplift(0.10, 0.10) == 0
        with pytest.raises(InvalidInputError):
            uplift(0, 0.3)


class TestZTest:
    def test_hand_computed_example(self):
        a, b = ArmStats(10, 990), ArmStats(100, 900)
        pooled = 110 / 2000
        z = (0.1 - 0.01) / math.sqrt(pooled * (1 - pooled) * (2 / 1000))
        assert z_statistic(a, b) == pytest.approx(z, rel=1e-14)
        assert 8.7 < z < 8.9
        assert z_test(a, b, 0.05) == "significant_b_better"

    def test_identical(self):
        assert z_test(ArmStats(10, 90), ArmStats(10, 90)) == "not_significant"

    @pytest.mark.parametrize("sig", [0.01, 0.05, 0.2, 0.49])
    def test_b_worse(self, sig):
        assert z_test(ArmStats(50, 50), ArmStats(30, 70), sig) == "not_significant"

    def test_guards(self):
        with pytest.raises(InvalidInputError):
            z_test(ArmStats(0, 0), ArmStats(1, 1))
        with pytest.raises(InvalidInputError):
            z_test(ArmStats(1, 1), ArmStats(1, 1), 1.5)

    def test_normal_ppf_against_scipy(self):
        ps = np.concatenate([np.linspace(1e-6, 1 - 1e-6, 2001), [1e-12, 0.02425, 0.5, 0.95, 0.975, 1 - 1e-9]])
        for p in ps:
            assert normal_ppf(p) == pytest.approx(stats.norm.ppf(p), abs=1e-8)

    def test_normal_ppf_domain(self):
        for p in (0.0, 1.0, -0.1):
            with pytest.raises(InvalidInputError):
                normal_ppf(p)


class TestDecide:
    def test_promote(self):
        d = decide(ArmStats(10, 990), ArmStats(100, 900))
        assert d.action == "promote_variant" and d.threshold == 0.95
        assert d.uplift == pytest.approx(9.0)

    def test_strict_threshold(self):
        a, b = ArmStats(20, 80), ArmStats(29, 71)
        p = prob_b_beats_a(posterior_from_counts(a), posterior_from_counts(b))
        assert decide(a, b, threshold=p).action == "keep_control"
        assert decide(a, b, threshold=p - 1e-9).action == "promote_variant"

    def test_probability_096(self):
        # B=(31, 69) vs A=(20, 80) gives about 0.96
        d = decide(ArmStats(20, 80), ArmStats(31, 69), 0.95)
        assert 0.95 < d.probability_b_beats_a < 0.97
        assert d.action == "promote_variant"

    def test_zero_clicks_both(self):
        d = decide(ArmStats(0, 100), ArmStats(0, 100))
        assert d.action == "keep_control"
        assert d.probability_b_beats_a == pytest.approx(0.5, abs=1e-12)
        assert d.uplift is None

    def test_json(self):
        assert set(decide(ArmStats(1, 1), ArmStats(1, 1)).to_json()) == {
            "action", "probability_b_beats_a", "uplift", "threshold"}
