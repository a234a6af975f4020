"""LASSO regression by cyclic coordinate descent with k-fold cross-validated lambda.

Columns are standardized (zero mean, unit population variance) before
fitting and coefficients are reported on the original scale. The objective
minimised on standardized data is

    (1 / 2K) * sum_k (y_k - w0 - sum_i w_i x_ik)^2 + lambda * sum_i |w_i|

so that :func:`lambda_max` ``= max_j |<x_j, y - mean(y)>| / K`` is exactly
the smallest penalty with an all-zero solution.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .rng import Rng

log = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-7
DEFAULT_MAX_ITERATIONS = 10_000


@dataclass
class RegressionProblem:
    X: np.ndarray
    y: np.ndarray
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        if self.X.shape[0] != self.y.shape[0]:
            raise InvalidInputError("X and y have different row counts")
        if self.X.shape[0] < 2:
            raise InvalidInputError("need at least 2 rows")
        if not self.names:
            self.names = [f"x{i}" for i in range(self.X.shape[1])]

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, rows: np.ndarray) -> "RegressionProblem":
        return RegressionProblem(self.X[rows], self.y[rows], list(self.names))

    def standardized(self):
        """Return ``(Xs, y_centered, means, scales, active)``.

        Zero-variance columns are inactive: their standardized column is left
        at zero and their coefficient is fixed at 0.
        """
        # row reductions over the transposed copy, so each column's statistics
        # do not depend on which other columns are present
        cols = np.ascontiguousarray(self.X.T)
        means = cols.mean(axis=1)
        scales = cols.std(axis=1)
        active = scales > 1e-12 * np.maximum(1.0, np.abs(means))
        safe = np.where(active, scales, 1.0)
        Xs = np.where(active, (self.X - means) / safe, 0.0)
        return Xs, self.y - self.y.mean(), means, safe, active


@dataclass
class LassoFit:
    w0: float
    weights: np.ndarray
    lam: float
    iterations_used: int
    converged: bool
    objective_path: list[float] = field(default_factory=list, repr=False)
    excluded: list[int] = field(default_factory=list)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.w0 + np.asarray(X, dtype=np.float64) @ self.weights


def soft_threshold(rho: float, lam: float) -> float:
    """sign(rho) * max(|rho| - lam, 0)."""
    if rho > lam:
        return rho - lam
    if rho < -lam:
        return rho + lam
    return 0.0


def lambda_max(problem: RegressionProblem) -> float:
    Xs, yc, _, _, active = problem.standardized()
    if not active.any():
        raise InvalidInputError("design has no non-constant column")
    # same per-column expression as the first coordinate update, so that
    # lambda == lambda_max yields exactly zero weights
    n = problem.n_rows
    return max(abs(Xs[:, j] @ yc / n) for j in np.flatnonzero(active))


def objective(Xs: np.ndarray, yc: np.ndarray, w: np.ndarray, lam: float) -> float:
    r = yc - Xs @ w
    return float(r @ r / (2 * Xs.shape[0]) + lam * np.abs(w).sum())


def fit(
    problem: RegressionProblem,
    lam: float,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    track_objective: bool = False,
) -> LassoFit:
    """Coordinate-descent LASSO at a single penalty ``lam``.

    Converged when the largest coefficient change in a sweep (standardized
    scale) drops below ``tolerance``. Hitting ``max_iterations`` returns the
    current fit with ``converged=False``.
    """
    if lam < 0:
        raise InvalidInputError("lambda must be >= 0")
    if tolerance <= 0:
        raise InvalidInputError("tolerance must be > 0")
    Xs, yc, means, scales, active = problem.standardized()
    n = problem.n_rows
    cols = np.flatnonzero(active)
    col_sq = (Xs * Xs).sum(axis=0) / n  # 1 for active columns, up to rounding
    w = np.zeros(problem.n_features)
    r = yc.copy()
    path = [objective(Xs, yc, w, lam)] if track_objective else []
    converged = False
    sweeps = 0
    while sweeps < max_iterations:
        sweeps += 1
        max_delta = 0.0
        for j in cols:
            xj = Xs[:, j]
            old = w[j]
            rho = xj @ r / n + col_sq[j] * old
            new = soft_threshold(rho, lam) / col_sq[j]
            if new != old:
                r -= xj * (new - old)
                w[j] = new
                max_delta = max(max_delta, abs(new - old))
        if track_objective:
            path.append(objective(Xs, yc, w, lam))
        if max_delta < tolerance:
            converged = True
            break
    weights = w / scales
    w0 = float(problem.y.mean() - weights @ means)
    excluded = [int(i) for i in np.flatnonzero(~active)]
    if excluded:
        log.debug("excluded zero-variance columns: %s", [problem.names[i] for i in excluded])
    return LassoFit(w0, weights, float(lam), sweeps, converged, path, excluded)


def lambda_grid(lambda_max_value: float, count: int = 100, ratio: float = 1e-3) -> np.ndarray:
    """``count`` log-spaced values from ``lambda_max_value`` down to ``lambda_max_value * ratio``."""
    if count < 2:
        raise InvalidInputError("count must be >= 2")
    if not 0 < ratio < 1:
        raise InvalidInputError("ratio must lie in (0, 1)")
    if lambda_max_value <= 0:
        raise InvalidInputError("lambda_max must be positive to build a grid")
    exps = np.linspace(0.0, math.log10(ratio), count)
    grid = lambda_max_value * 10.0**exps
    grid[0] = lambda_max_value
    grid[-1] = lambda_max_value * ratio
    return grid


@dataclass
class CvReport:
    lambda_grid: np.ndarray
    cv_errors: np.ndarray
    fold_errors: np.ndarray
    k_folds: int
    seed: int

    def to_json(self) -> dict:
        return {
            "lambda_grid": self.lambda_grid.tolist(),
            "cv_errors": self.cv_errors.tolist(),
            "fold_errors": self.fold_errors.tolist(),
            "k_folds": self.k_folds,
            "seed": self.seed,
        }


def fold_assignment(n_rows: int, k_folds: int, seed: int) -> list[np.ndarray]:
    """Seeded random partition of row indices into ``k_folds`` near-equal folds."""
    perm = Rng(seed).permutation(n_rows)
    return [np.sort(np.asarray(perm[j::k_folds], dtype=np.int64)) for j in range(k_folds)]


def cross_validate(
    problem: RegressionProblem,
    grid: Sequence[float],
    k_folds: int = 5,
    seed: int = 0,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> CvReport:
    """k-fold CV error for every penalty in ``grid``.

    Each fold's error is the held-out mean squared error; the CV error is
    the mean over folds.
    """
    if not 2 <= k_folds <= problem.n_rows:
        raise InvalidInputError(f"k_folds must lie in [2, {problem.n_rows}], got {k_folds}")
    grid = np.asarray(grid, dtype=np.float64)
    folds = fold_assignment(problem.n_rows, k_folds, seed)
    fold_errors = np.empty((grid.shape[0], k_folds))
    all_rows = np.arange(problem.n_rows)
    for j, held in enumerate(folds):
        train = problem.subset(np.setdiff1d(all_rows, held))
        X_held, y_held = problem.X[held], problem.y[held]
        for g, lam in enumerate(grid):
            f = fit(train, float(lam), tolerance, max_iterations)
            resid = y_held - f.predict(X_held)
            fold_errors[g, j] = float(resid @ resid / resid.shape[0])
    return CvReport(grid, fold_errors.mean(axis=1), fold_errors, k_folds, seed)


def select_lambda(
    report: CvReport,
    problem: RegressionProblem,
    rule: str = "min",
    tolerance: float = DEFAULT_TOLERANCE,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> tuple[float, LassoFit]:
    """Choose lambda from a CV report and refit on all rows.

    ``min`` takes the lowest CV error, breaking ties toward the larger
    (sparser) lambda; ``one_se`` takes the largest lambda whose CV error is
    within one standard error of the minimum.
    """
    errors = np.asarray(report.cv_errors)
    grid = np.asarray(report.lambda_grid)
    if errors.size == 0:
        raise InvalidInputError("empty CV report")
    order = np.argsort(-grid, kind="stable")  # descending lambda
    best = order[int(np.argmin(errors[order]))]  # first minimum = largest lambda
    if rule == "min":
        chosen = best
    elif rule in ("one_se", "one-se"):
        k = report.fold_errors.shape[1]
        se = float(np.std(report.fold_errors[best], ddof=1) / math.sqrt(k)) if k > 1 else 0.0
        limit = errors[best] + se
        chosen = next(i for i in order if errors[i] <= limit)
    else:
        raise InvalidInputError(f"unknown rule {rule!r}")
    lam = float(grid[chosen])
    return lam, fit(problem, lam, tolerance, max_iterations)


def save_model(path: str | Path, names: Sequence[str], fit_result: LassoFit, report: CvReport | None = None,
               rule: str = "min") -> None:
    data = {
        "names": list(names),
        "w0": fit_result.w0,
        "weights": [float(v) for v in fit_result.weights],
        "lambda": fit_result.lam,
        "converged": fit_result.converged,
        "rule": rule,
    }
    if report is not None:
        best = int(np.argmin(report.cv_errors))
        data["cv"] = {
            "k_folds": report.k_folds,
            "seed": report.seed,
            "grid_size": int(report.lambda_grid.shape[0]),
            "lambda_max": float(report.lambda_grid[0]),
            "min_cv_error": float(report.cv_errors[best]),
            "lambda_grid": report.lambda_grid.tolist(),
            "cv_errors": report.cv_errors.tolist(),
        }
    Path(path).write_text(json.dumps(data, indent=2), encoding="utf-8")


def load_model(path: str | Path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("names", "w0", "weights"):
        if key not in data:
            raise InvalidInputError(f"{path}: missing {key!r}")
    if len(data["names"]) != len(data["weights"]):
        raise InvalidInputError(f"{path}: names and weights differ in length")
    return data
