import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from clickcascade.analysis import (
    FeatureDistribution,
    bootstrap,
    compare,
    feature_frequency_series,
    final_feature_distribution,
    first_ranked_series,
    gini,
    polyfit_r2,
    scenario_summary,
    shannon_entropy,
)
from clickcascade.errors import InvalidInputError
from clickcascade.sim import ArmLog, PackageGenotype, ReplicaResult, RoundLog


def shares(values):
    return FeatureDistribution(np.asarray(values, dtype=float), False).shares()


def replica(controls, index=0):
    logs = [RoundLog(t, ArmLog(PackageGenotype(tuple(c)), 10, 1), ArmLog(PackageGenotype((0,)), 10, 1), "x", 2)
            for t, c in enumerate(controls)]
    return ReplicaResult(index, 0, logs, PackageGenotype(tuple(controls[-1])))


def continuous_r2_linear_fit_of_cube():
    """R^2 of the L2-best line to t^3 on [0, 1], exactly."""
    t = sp.symbols("t")
    mean = lambda f: sp.integrate(f, (t, 0, 1))
    cov = mean(t * t**3) - mean(t) * mean(t**3)
    var_t = mean(t**2) - mean(t) ** 2
    var_y = mean(t**6) - mean(t**3) ** 2
    return float(cov**2 / (var_t * var_y))


class TestFrequencySeries:
    def test_constant_presence(self):
        freq = feature_frequency_series([replica([[1, 2]] * 6)], 5)
        np.testing.assert_array_equal(freq[:, 1], 1.0)
        np.testing.assert_array_equal(freq[:, 4], 0.0)
        np.testing.assert_array_equal(first_ranked_series(freq), 1.0)

    def test_average_over_replicas(self):
        freq = feature_frequency_series([replica([[0], [1]], 0), replica([[0], [2]], 1)], 3)
        np.testing.assert_array_equal(freq, [[1, 0, 0], [0, 0.5, 0.5]])
        assert freq.min() >= 0 and freq.max() <= 1

    def test_mismatch(self):
        with pytest.raises(InvalidInputError):
            feature_frequency_series([replica([[0]] * 3), replica([[0]] * 4)], 3)
        with pytest.raises(InvalidInputError):
            feature_frequency_series([replica([[7]])], 3)
        with pytest.raises(InvalidInputError):
            feature_frequency_series([], 3)


class TestFinalDistribution:
    def test_common_final_genotype(self):
        d = final_feature_distribution([replica([[1, 3, 5]], i) for i in range(4)], 10)
        assert np.count_nonzero(d.values) == 3
        np.testing.assert_allclose(d.values[[1, 3, 5]], 1 / 3)

    def test_single_replica_support(self):
        d = final_feature_distribution([replica([[0, 9], [2, 4]])], 10)
        assert set(np.flatnonzero(d.values)) == {2, 4}
        assert d.normalized and abs(d.values.sum() - 1) < 1e-12


class TestConcentration:
    def test_entropy_examples(self):
        assert shannon_entropy(shares([1] * 50)) == pytest.approx(math.log(50), abs=1e-12)
        assert shannon_entropy(shares([0] * 49 + [1])) == 0.0
        assert shannon_entropy(shares([1, 1, 0])) == pytest.approx(math.log(2), abs=1e-12)

    def test_gini_examples(self):
        assert gini(shares([1] * 50)) == pytest.approx(0.0, abs=1e-12)
        assert gini(shares([0] * 49 + [1])) == pytest.approx(0.98, abs=1e-12)
        assert gini(shares([0.5, 0.5, 0, 0])) == pytest.approx(0.5, abs=1e-12)

    @given(st.lists(st.integers(0, 20), min_size=2, max_size=30).filter(lambda v: sum(v) > 0))
    @settings(max_examples=100)
    def test_gini_matches_pairwise_definition(self, counts):
        d = shares(counts)
        x = d.values
        pairwise = np.abs(x[:, None] - x[None, :]).sum() / (2 * len(x) * x.sum())
        assert gini(d) == pytest.approx(pairwise, abs=1e-12)
        assert 0 <= gini(d) < 1
        assert 0 <= shannon_entropy(d) <= math.log(len(x)) + 1e-12

    def test_unnormalized_rejected(self):
        with pytest.raises(InvalidInputError):
            shannon_entropy(FeatureDistribution(np.array([1.0, 2.0]), False))
        with pytest.raises(InvalidInputError):
            gini(FeatureDistribution(np.array([0.7, 0.7]), True))
        with pytest.raises(InvalidInputError):
            shares([0, 0])


class TestPolyfit:
    t = np.linspace(0, 1, 100)

    def test_linear_exact(self):
        assert abs(polyfit_r2(3 * self.t - 1, 1).r2 - 1) < 1e-9

    def test_cubic_exact(self):
        f = polyfit_r2(self.t**3, 3)
        assert abs(f.r2 - 1) < 1e-9
        np.testing.assert_allclose(f.coefficients, [0, 0, 0, 1], atol=1e-9)

    def test_cubic_with_line_matches_continuous_oracle(self):
        oracle = continuous_r2_linear_fit_of_cube()
        assert oracle == pytest.approx(0.84, abs=1e-12)
        assert polyfit_r2(self.t**3, 1).r2 == pytest.approx(oracle, abs=0.01)

    def test_r2_never_above_one(self):
        y = np.random.default_rng(0).normal(size=40)
        for d in range(5):
            assert polyfit_r2(y, d).r2 <= 1 + 1e-12

    def test_guards(self):
        with pytest.raises(InvalidInputError):
            polyfit_r2(np.ones(10), 1)
        with pytest.raises(InvalidInputError):
            polyfit_r2([1.0, 2.0], 1)
        with pytest.raises(InvalidInputError):
            polyfit_r2(self.t, 40)


class TestBootstrap:
    def test_mean_statistic(self):
        values = np.arange(20, dtype=float)
        out = bootstrap(lambda idx: values[idx].mean(), 20, 2000, seed=1)
        assert out["ci_low"] < 9.5 < out["ci_high"]
        assert out["mean"] == pytest.approx(9.5, abs=0.2)

    def test_seeded(self):
        f = lambda idx: float(sum(idx))
        assert bootstrap(f, 10, 50, 3) == bootstrap(f, 10, 50, 3)
        assert bootstrap(f, 10, 50, 3) != bootstrap(f, 10, 50, 4)


class TestSummary:
    def test_compare_reports_entropy(self):
        concentrated = [replica([[i % 3, 5 + i % 2]] * 8, i) for i in range(10)]
        spread = [replica([[2 * i % 10, (2 * i + 1) % 10]] * 7 + [[i % 10, (i + 3) % 10]], i) for i in range(10)]
        s = {"a": scenario_summary(concentrated, 10, n_resamples=200),
             "b": scenario_summary(spread, 10, n_resamples=200)}
        c = compare(s)
        assert set(c["mean_final_entropy"]) == {"a", "b"}
        assert c["pairs"][0]["lower_entropy"] == "a"
        assert "delta_r2_cubic_vs_linear" in c
        assert s["a"]["trend"] == {"error": "R^2 undefined for a constant series"}
