"""Post-simulation analysis: feature dynamics, final distributions, concentration, trend fits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInputError
from .rng import Rng
from .sim import ReplicaResult


@dataclass(frozen=True)
class FeatureDistribution:
    values: np.ndarray
    normalized: bool

    def shares(self) -> "FeatureDistribution":
        total = self.values.sum()
        if total <= 0:
            raise InvalidInputError("cannot normalize an all-zero distribution")
        return FeatureDistribution(self.values / total, True)


def feature_frequency_series(results: Sequence[ReplicaResult], n_universe: int) -> np.ndarray:
    """(rounds, M): fraction of replicas whose round-t control contains feature i."""
    if not results:
        raise InvalidInputError("no replica results")
    n_rounds = len(results[0].round_logs)
    if any(len(r.round_logs) != n_rounds for r in results):
        raise InvalidInputError("replicas have different round counts")
    total = np.zeros((n_rounds, n_universe))
    for r in results:
        for log in r.round_logs:
            if any(f >= n_universe for f in log.arm_a.genotype.features):
                raise InvalidInputError("genotype feature outside the feature universe")
        total += r.feature_frequency(n_universe)
    return total / len(results)


def first_ranked_series(frequency: np.ndarray) -> np.ndarray:
    """Row-wise maximum: the presence share of the leading feature at each round."""
    return np.asarray(frequency).max(axis=1)


def final_feature_distribution(results: Sequence[ReplicaResult], n_universe: int | None = None) -> FeatureDistribution:
    """Feature shares over the final control genotypes of all replicas."""
    if not results:
        raise InvalidInputError("no replica results")
    if n_universe is None:
        n_universe = 1 + max(f for r in results for f in r.final_control.features)
    counts = np.zeros(n_universe)
    for r in results:
        counts[list(r.final_control.features)] += 1
    return FeatureDistribution(counts, False).shares()


def _check_normalized(dist: FeatureDistribution) -> np.ndarray:
    p = np.asarray(dist.values, dtype=np.float64)
    if not dist.normalized or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidInputError("distribution must be normalized (non-negative, summing to 1)")
    return p


def shannon_entropy(dist: FeatureDistribution) -> float:
    """Entropy in nats over the nonzero shares."""
    p = _check_normalized(dist)
    p = p[p > 0]
    return float(-(p * np.log(p)).sum()) + 0.0


def gini(dist: FeatureDistribution) -> float:
    """Gini coefficient of the share vector, zeros included.

    Uses the sorted form of ``sum_ij |x_i - x_j| / (2 n sum x)``.
    """
    p = np.sort(_check_normalized(dist))
    n = p.shape[0]
    ranks = np.arange(1, n + 1)
    return float(np.sum((2 * ranks - n - 1) * p) / (n * p.sum()))


@dataclass(frozen=True)
class PolyFit:
    coefficients: np.ndarray  # lowest degree first, on the [0, 1] time axis
    r2: float


def polyfit_r2(series: Sequence[float], degree: int) -> PolyFit:
    """Least-squares polynomial of ``degree`` over time rescaled to [0, 1], plus R^2.

    Solved through the normal equations on a column-scaled Vandermonde basis.
    """
    y = np.asarray(series, dtype=np.float64)
    n = y.shape[0]
    if degree < 0:
        raise InvalidInputError("degree must be >= 0")
    if n <= degree + 1:
        raise InvalidInputError(f"need more than {degree + 1} points for degree {degree}")
    sst = float(((y - y.mean()) ** 2).sum())
    if sst == 0:
        raise InvalidInputError("R^2 undefined for a constant series")
    t = np.linspace(0.0, 1.0, n)
    V = np.vander(t, degree + 1, increasing=True)
    norms = np.linalg.norm(V, axis=0)
    Vs = V / norms
    gram = Vs.T @ Vs
    if np.linalg.cond(gram) > 1e12:
        raise InvalidInputError("normal equations are degenerate")
    coef = np.linalg.solve(gram, Vs.T @ y) / norms
    resid = y - V @ coef
    return PolyFit(coef, 1.0 - float(resid @ resid) / sst)


def bootstrap(values_from: Callable[[list[int]], float], n_items: int, n_resamples: int = 2000,
              seed: int = 0, confidence: float = 0.95) -> dict:
    """Percentile bootstrap over item indices.

    ``values_from`` maps a resampled index list to a statistic. Returns the
    bootstrap mean and the percentile confidence interval.
    """
    if n_items < 1 or n_resamples < 1:
        raise InvalidInputError("need at least one item and one resample")
    rng = Rng(seed)
    stats = np.empty(n_resamples)
    for b in range(n_resamples):
        idx = [rng.randbelow(n_items) for _ in range(n_items)]
        stats[b] = values_from(idx)
    tail = (1.0 - confidence) / 2 * 100
    lo, hi = np.percentile(stats, [tail, 100 - tail])
    return {"mean": float(stats.mean()), "ci_low": float(lo), "ci_high": float(hi),
            "confidence": confidence, "n_resamples": n_resamples, "seed": seed}


def final_concentration(results: Sequence[ReplicaResult], n_universe: int, n_resamples: int = 2000,
                        seed: int = 0) -> dict:
    """Entropy and Gini of the final distribution, with replica-bootstrap intervals."""
    finals = [list(r.final_control.features) for r in results]

    def dist_of(idx):
        counts = np.zeros(n_universe)
        for i in idx:
            counts[finals[i]] += 1
        return FeatureDistribution(counts, False).shares()

    full = dist_of(range(len(finals)))
    return {
        "entropy": shannon_entropy(full),
        "gini": gini(full),
        "entropy_bootstrap": bootstrap(lambda idx: shannon_entropy(dist_of(idx)), len(finals), n_resamples, seed),
        "gini_bootstrap": bootstrap(lambda idx: gini(dist_of(idx)), len(finals), n_resamples, seed),
        "distribution": full.values.tolist(),
    }


def trend_fits(series: Sequence[float], degrees: Sequence[int] = (1, 3)) -> dict:
    fits = {d: polyfit_r2(series, d) for d in degrees}
    out = {f"degree_{d}": {"coefficients": f.coefficients.tolist(), "r2": f.r2} for d, f in fits.items()}
    if 1 in fits and 3 in fits:
        out["delta_r2_cubic_vs_linear"] = fits[3].r2 - fits[1].r2
    return out


def scenario_summary(results: Sequence[ReplicaResult], n_universe: int, degrees: Sequence[int] = (1, 3),
                     n_resamples: int = 2000, seed: int = 0) -> dict:
    freq = feature_frequency_series(results, n_universe)
    leading = first_ranked_series(freq)
    summary = {
        "n_replicas": len(results),
        "n_rounds": int(freq.shape[0]),
        "first_ranked_series": leading.tolist(),
        "final": final_concentration(results, n_universe, n_resamples, seed),
    }
    try:
        summary["trend"] = trend_fits(leading, degrees)
    except InvalidInputError as exc:
        summary["trend"] = {"error": str(exc)}
    return summary


def compare(summaries: dict[str, dict]) -> dict:
    """Pairwise comparison of final-entropy bootstrap intervals and trend shapes."""
    names = list(summaries)
    out = {"mean_final_entropy": {n: summaries[n]["final"]["entropy_bootstrap"]["mean"] for n in names}}
    pairs = []
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            a, b = summaries[names[i]]["final"]["entropy_bootstrap"], summaries[names[j]]["final"]["entropy_bootstrap"]
            pairs.append({
                "a": names[i],
                "b": names[j],
                "lower_entropy": names[i] if a["mean"] < b["mean"] else names[j],
                "ci_overlap": not (a["ci_high"] < b["ci_low"] or b["ci_high"] < a["ci_low"]),
            })
    out["pairs"] = pairs
    out["delta_r2_cubic_vs_linear"] = {
        n: summaries[n]["trend"].get("delta_r2_cubic_vs_linear") for n in names
    }
    return out
