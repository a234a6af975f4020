"""Bayesian A/B decisions on click counts, plus a frequentist z-test baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln

from .errors import InvalidInputError

DEFAULT_THRESHOLD = 0.95


@dataclass(frozen=True)
class ArmStats:
    clicks: int
    failures: int

    def __post_init__(self):
        if self.clicks < 0 or self.failures < 0:
            raise InvalidInputError("clicks and failures must be non-negative")

    @classmethod
    def from_impressions(cls, clicks: int, impressions: int) -> "ArmStats":
        if clicks > impressions:
            raise InvalidInputError(f"clicks ({clicks}) exceed impressions ({impressions})")
        return cls(int(clicks), int(impressions - clicks))

    @property
    def impressions(self) -> int:
        return self.clicks + self.failures

    @property
    def ctr(self) -> float | None:
        return self.clicks / self.impressions if self.impressions else None


@dataclass(frozen=True)
class BetaPosterior:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise InvalidInputError("Beta parameters must be positive")


def posterior_from_counts(stats: ArmStats) -> BetaPosterior:
    """Beta(C + 1, F + 1): the flat Beta(1, 1) prior updated with the counts."""
    return BetaPosterior(stats.clicks + 1, stats.failures + 1)


def _as_int(x: float, what: str) -> int:
    if not float(x).is_integer():
        raise InvalidInputError(
            f"{what}={x} is not an integer; the closed form needs integer parameters, "
            "use prob_b_beats_a_mc instead"
        )
    return int(x)


def prob_b_beats_a(post_a: BetaPosterior, post_b: BetaPosterior) -> float:
    """Exact Pr(p_B > p_A) for independent Beta posteriors with integer parameters.

    Evaluates the finite sum over i = 0 .. alpha_B - 1 of

        T_i = B(a_A + i, b_A + b_B) / ((b_B + i) B(1 + i, b_B) B(a_A, b_A))

    in log space. Rather than calling log-Beta for every term (whose absolute
    error grows with the size of the counts), the first term is built from a
    sum of ``log1p`` ratios,

        log T_0 = sum_{j < b_B} log((b_A + j) / (a_A + b_A + j)),

    and later terms follow the exact ratio
    ``T_{i+1} / T_i = (a_A + i) / (a_A + b_A + b_B + i) * (b_B + i) / (1 + i)``
    accumulated with compensated summation.
    """
    n_terms = _as_int(post_b.alpha, "alpha_B")
    a_a = _as_int(post_a.alpha, "alpha_A")
    b_a = _as_int(post_a.beta, "beta_A")
    b_b = _as_int(post_b.beta, "beta_B")
    c = b_a + b_b
    j = np.arange(b_b, dtype=np.float64)
    log_t = math.fsum(np.log1p(-a_a / (a_a + b_a + j)).tolist())
    i = np.arange(n_terms - 1, dtype=np.float64)
    log_ratio = np.log1p(-c / (a_a + c + i)) + np.log((b_b + i) / (1.0 + i))
    terms = [math.exp(log_t)]
    comp = 0.0
    for x in log_ratio.tolist():
        y = x - comp
        t = log_t + y
        comp = (t - log_t) - y
        log_t = t
        terms.append(math.exp(log_t))
    return min(1.0, max(0.0, math.fsum(terms)))


def prob_b_beats_a_betaln(post_a: BetaPosterior, post_b: BetaPosterior) -> float:
    """Direct log-Beta evaluation of the same sum; accepts real ``alpha_A``, ``beta_A``, ``beta_B``.

    Less accurate than :func:`prob_b_beats_a` for large counts.
    """
    n_terms = _as_int(post_b.alpha, "alpha_B")
    a_a, b_a, b_b = float(post_a.alpha), float(post_a.beta), float(post_b.beta)
    i = np.arange(n_terms, dtype=np.float64)
    log_terms = betaln(a_a + i, b_a + b_b) - np.log(b_b + i) - betaln(1.0 + i, b_b) - betaln(a_a, b_a)
    return min(1.0, max(0.0, math.fsum(np.exp(log_terms).tolist())))


def prob_b_beats_a_mc(post_a: BetaPosterior, post_b: BetaPosterior, n_samples: int = 1_000_000,
                      seed: int = 0) -> float:
    """Monte Carlo estimate of Pr(p_B > p_A) from ``n_samples`` paired draws."""
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    gen = np.random.default_rng(seed)
    pa = gen.beta(post_a.alpha, post_a.beta, size=n_samples)
    pb = gen.beta(post_b.alpha, post_b.beta, size=n_samples)
    return float(np.count_nonzero(pb > pa) / n_samples)


def uplift(ctr_a: float, ctr_b: float) -> float:
    """Relative click-through gain of B over A: (c_B - c_A) / c_A."""
    if ctr_a == 0:
        raise InvalidInputError("uplift undefined for a control CTR of 0")
    return (ctr_b - ctr_a) / ctr_a


# Acklam's rational approximation to the standard normal quantile
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_ppf(p: float) -> float:
    """Standard normal quantile.

    Acklam's rational approximation (relative error ~1e-9) followed by one
    Halley refinement step against ``erfc``.
    """
    if not 0.0 < p < 1.0:
        raise InvalidInputError("p must lie in (0, 1)")
    if p < _P_LOW:
        q = math.sqrt(-2 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    elif p <= 1 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)
    else:
        q = math.sqrt(-2 * math.log(1 - p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    e = 0.5 * math.erfc(-x / math.sqrt(2)) - p
    u = e * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
    return x - u / (1 + x * u / 2)


def z_statistic(stats_a: ArmStats, stats_b: ArmStats) -> float:
    """Pooled two-proportion z statistic for B minus A."""
    n_a, n_b = stats_a.impressions, stats_b.impressions
    if n_a < 1 or n_b < 1:
        raise InvalidInputError("both arms need at least one impression")
    pooled = (stats_a.clicks + stats_b.clicks) / (n_a + n_b)
    var = pooled * (1 - pooled) * (1 / n_a + 1 / n_b)
    diff = stats_b.clicks / n_b - stats_a.clicks / n_a
    if var == 0:
        return 0.0
    return diff / math.sqrt(var)


def z_test(stats_a: ArmStats, stats_b: ArmStats, significance: float = 0.05) -> str:
    """One-sided pooled z-test: ``significant_b_better`` or ``not_significant``."""
    if not 0 < significance < 1:
        raise InvalidInputError("significance must lie in (0, 1)")
    z = z_statistic(stats_a, stats_b)
    return "significant_b_better" if z > normal_ppf(1 - significance) else "not_significant"


@dataclass(frozen=True)
class AbDecision:
    action: str  # keep_control | promote_variant
    probability_b_beats_a: float
    uplift: float | None
    threshold: float

    def to_json(self) -> dict:
        return {
            "action": self.action,
            "probability_b_beats_a": self.probability_b_beats_a,
            "uplift": self.uplift,
            "threshold": self.threshold,
        }


def decide(stats_a: ArmStats, stats_b: ArmStats, threshold: float = DEFAULT_THRESHOLD) -> AbDecision:
    """Promote B iff Pr(p_B > p_A) is strictly greater than ``threshold``."""
    if not 0 < threshold < 1:
        raise InvalidInputError("threshold must lie in (0, 1)")
    prob = prob_b_beats_a(posterior_from_counts(stats_a), posterior_from_counts(stats_b))
    ctr_a, ctr_b = stats_a.ctr, stats_b.ctr
    lift = uplift(ctr_a, ctr_b) if ctr_a and ctr_b is not None else None
    action = "promote_variant" if prob > threshold else "keep_control"
    return AbDecision(action, prob, lift, threshold)
