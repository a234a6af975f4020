"""Agent-based click-and-share simulation with pure-social and A/B-led package selection.

A replica draws a graph and a first control package, then runs rounds. In
each round half the agents (chosen at random) see the control A and the
rest see the variant B; agents click with the decision model's probability
and clickers pass the package on to neighbours with the infection rate.
After the round a selector picks the next control and a mutated variant.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import kernels
from .bayes_ab import ArmStats, decide
from .errors import InvalidInputError
from .netgen import Graph, GraphSpec
from .rng import Rng, derive_seed

SCENARIOS = ("pure", "ab_led")
KEEP_RULES = ("random", "most_clicked")
MAPPINGS = ("clipped_linear", "logistic")
THREADS_ENV = "CLICKCASCADE_THREADS"


@dataclass(frozen=True)
class PackageGenotype:
    """A synthetic package: ``n_F`` distinct feature indices.

    ``uid`` is unique within a replica, ``lineage_id`` is the round in which
    the package was created and ``parent_id`` the ``uid`` it was mutated from.
    """

    features: tuple[int, ...]
    lineage_id: int = 0
    parent_id: int | None = None
    uid: int = 0

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(sorted(int(f) for f in self.features)))
        if len(set(self.features)) != len(self.features):
            raise InvalidInputError("package features must be distinct")

    def __str__(self) -> str:
        return "+".join(str(f) for f in self.features)

    @staticmethod
    def parse(text: str) -> tuple[int, ...]:
        return tuple(int(t) for t in text.split("+")) if text else ()


@dataclass(frozen=True)
class DecisionModel:
    w0: float
    weights: tuple[float, ...]
    probability_floor: float = 0.001
    mapping: str = "clipped_linear"

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not 0 < self.probability_floor < 0.5:
            raise InvalidInputError("probability_floor must lie in (0, 0.5)")
        if self.mapping not in MAPPINGS:
            raise InvalidInputError(f"mapping must be one of {MAPPINGS}")

    @property
    def n_features(self) -> int:
        return len(self.weights)

    def score(self, features: Sequence[int]) -> float:
        m = len(self.weights)
        total = self.w0
        for f in features:
            if not 0 <= f < m:
                raise InvalidInputError(f"feature index {f} outside [0, {m})")
            total += self.weights[f]
        return total

    @classmethod
    def synthetic(cls, n_features: int, n_per_package: int, seed: int, intercept: float = 0.5,
                  score_sd: float = 0.25, **kwargs) -> "DecisionModel":
        """Weights ``z_i * score_sd / sqrt(n_per_package)`` with ``z_i`` standard normal from ``seed``.

        The raw score of a random package then has mean ``intercept`` (plus
        noise from the drawn weights) and standard deviation about ``score_sd``.
        """
        rng = Rng(seed)
        scale = score_sd / math.sqrt(n_per_package)
        return cls(intercept, tuple(scale * rng.normal() for _ in range(n_features)), **kwargs)

    @classmethod
    def from_json(cls, data: dict, **kwargs) -> "DecisionModel":
        return cls(float(data["w0"]), tuple(data["weights"]), **kwargs)


def click_probability(model: DecisionModel, pkg: PackageGenotype | Sequence[int]) -> float:
    """Click probability of a package, bounded to ``[eps, 1 - eps]``."""
    features = pkg.features if isinstance(pkg, PackageGenotype) else pkg
    s = model.score(features)
    eps = model.probability_floor
    if model.mapping == "logistic":
        s = 1.0 / (1.0 + math.exp(-s)) if s >= 0 else math.exp(s) / (1.0 + math.exp(s))
    return min(max(s, eps), 1.0 - eps)


def random_package(n_universe: int, n_features: int, rng: Rng, uid: int = 0, lineage_id: int = 0) -> PackageGenotype:
    if n_features < 1:
        raise InvalidInputError("a package needs at least one feature")
    if n_features > n_universe:
        raise InvalidInputError(f"cannot pick {n_features} features from {n_universe}")
    return PackageGenotype(tuple(rng.sample(range(n_universe), n_features)), lineage_id, None, uid)


def n_replaced(mu: float, n_features: int) -> int:
    """round(mu * n_F), halves rounded up; a tiny slack absorbs float error in mu."""
    return int(math.floor(mu * n_features + 0.5 + 1e-9))


def mutate(pkg: PackageGenotype, mu: float, n_universe: int, rng: Rng, uid: int = 0,
           lineage_id: int = 0) -> PackageGenotype:
    """Replace ``round(mu * n_F)`` features with ones drawn from outside the original set."""
    if not 0.0 <= mu <= 1.0:
        raise InvalidInputError("mutation rate must lie in [0, 1]")
    r = n_replaced(mu, len(pkg.features))
    complement = [f for f in range(n_universe) if f not in set(pkg.features)]
    if r > len(complement):
        raise InvalidInputError(f"cannot replace {r} features: only {len(complement)} outside the package")
    removed = set(rng.sample(pkg.features, r))
    added = rng.sample(complement, r)
    kept = [f for f in pkg.features if f not in removed]
    return PackageGenotype(tuple(kept + added), lineage_id, pkg.uid, uid)


@dataclass
class SimConfig:
    n_agents: int = 500
    total_steps: int = 500
    round_length: int = 5
    n_features_per_package: int = 7
    feature_universe: int = 50
    mutation_rate: float = 3 / 7
    infection_rate: float = 0.5
    ab_threshold: float = 0.95
    scenario: str = "pure"
    pure_keep_rule: str = "random"
    graph: dict = field(default_factory=lambda: {"topology": "barabasi_albert", "m": 3})
    master_seed: int = 0
    n_replicas: int = 100

    def __post_init__(self):
        if isinstance(self.mutation_rate, str):
            self.mutation_rate = float(Fraction(self.mutation_rate))

    @property
    def n_rounds(self) -> int:
        return self.total_steps // self.round_length

    def graph_spec(self) -> GraphSpec:
        return GraphSpec.from_dict(self.graph, self.n_agents)

    def validate(self) -> None:
        problems = []
        if self.n_agents < 2:
            problems.append("n_agents must be >= 2")
        if self.round_length < 1:
            problems.append("round_length must be >= 1")
        elif self.total_steps < self.round_length or self.total_steps % self.round_length:
            problems.append("total_steps must be a positive multiple of round_length")
        if not 1 <= self.n_features_per_package <= self.feature_universe:
            problems.append("need 1 <= n_features_per_package <= feature_universe")
        if not 0.0 <= self.mutation_rate <= 1.0:
            problems.append("mutation_rate must lie in [0, 1]")
        elif n_replaced(self.mutation_rate, self.n_features_per_package) > (
            self.feature_universe - self.n_features_per_package
        ):
            problems.append("mutation replaces more features than exist outside a package")
        if not 0.0 <= self.infection_rate <= 1.0:
            problems.append("infection_rate must lie in [0, 1]")
        if not 0.0 < self.ab_threshold < 1.0:
            problems.append("ab_threshold must lie in (0, 1)")
        if self.scenario not in SCENARIOS:
            problems.append(f"scenario must be one of {SCENARIOS}")
        if self.pure_keep_rule not in KEEP_RULES:
            problems.append(f"pure_keep_rule must be one of {KEEP_RULES}")
        if self.n_replicas < 1:
            problems.append("n_replicas must be >= 1")
        try:
            self.graph_spec()
        except (InvalidInputError, TypeError) as exc:
            problems.append(f"graph: {exc}")
        if problems:
            raise InvalidInputError("invalid simulation config: " + "; ".join(problems))

    def to_dict(self) -> dict:
        return {
            "n_agents": self.n_agents,
            "total_steps": self.total_steps,
            "round_length": self.round_length,
            "n_features_per_package": self.n_features_per_package,
            "feature_universe": self.feature_universe,
            "mutation_rate": self.mutation_rate,
            "infection_rate": self.infection_rate,
            "ab_threshold": self.ab_threshold,
            "scenario": self.scenario,
            "pure_keep_rule": self.pure_keep_rule,
            "graph": dict(self.graph),
            "master_seed": self.master_seed,
            "n_replicas": self.n_replicas,
        }


@dataclass
class RoundState:
    exposed: np.ndarray  # (2, N) uint8
    pending: np.ndarray  # exposed, click not yet drawn
    clicked: np.ndarray
    impressions: np.ndarray  # (2,) int64
    clicks: np.ndarray
    assignment: np.ndarray  # (N,) 0 = A, 1 = B


def init_round(n_agents: int, rng: Rng) -> RoundState:
    """Split agents by a random permutation: the first ceil(N/2) see A, the rest B."""
    if n_agents < 2:
        raise InvalidInputError("need at least two agents")
    perm = rng.permutation(n_agents)
    assignment = np.ones(n_agents, dtype=np.int64)
    assignment[perm[: (n_agents + 1) // 2]] = 0
    exposed = np.zeros((2, n_agents), dtype=np.uint8)
    exposed[assignment, np.arange(n_agents)] = 1
    impressions = exposed.sum(axis=1).astype(np.int64)
    return RoundState(exposed, exposed.copy(), np.zeros_like(exposed), impressions,
                      np.zeros(2, dtype=np.int64), assignment)


def cascade_step(state: RoundState, graph: Graph, probs: Sequence[float], eta: float, rng: Rng,
                 transmit: bool = True) -> int:
    """Advance one synchronous step; returns the number of new exposures."""
    indptr, indices = graph.csr()
    return int(kernels.cascade_step(
        indptr, indices, state.exposed, state.pending, state.clicked,
        np.asarray(probs, dtype=np.float64), float(eta), bool(transmit),
        state.impressions, state.clicks, rng.state,
    ))


@dataclass(frozen=True)
class ArmLog:
    genotype: PackageGenotype
    impressions: int
    clicks: int

    @property
    def ctr(self) -> float | None:
        return self.clicks / self.impressions if self.impressions else None


@dataclass(frozen=True)
class RoundLog:
    """Outcome of one round. ``decision`` records how this round's pair was chosen."""

    round_index: int
    arm_a: ArmLog
    arm_b: ArmLog
    decision: str
    steps: int


def run_round(graph: Graph, model: DecisionModel, pair: tuple[PackageGenotype, PackageGenotype],
              config: SimConfig, rng: Rng, round_index: int = 0, decision: str = "initial") -> RoundLog:
    """Allocate, spread until saturation or ``round_length`` steps, and tally.

    The initial allocation counts as step 1. When the step budget runs out,
    agents exposed in the last step still draw their click (without sharing)
    so that every impression has had its chance to click.
    """
    probs = (click_probability(model, pair[0]), click_probability(model, pair[1]))
    state = init_round(graph.n_nodes, rng)
    steps = 1
    while steps < config.round_length:
        steps += 1
        if cascade_step(state, graph, probs, config.infection_rate, rng) == 0:
            break
    if state.pending.any():
        cascade_step(state, graph, probs, config.infection_rate, rng, transmit=False)
    return RoundLog(
        round_index,
        ArmLog(pair[0], int(state.impressions[0]), int(state.clicks[0])),
        ArmLog(pair[1], int(state.impressions[1]), int(state.clicks[1])),
        decision,
        steps,
    )


class _Ids:
    """Serial package ids within a replica."""

    def __init__(self, start: int = 0):
        self.value = start

    def __call__(self) -> int:
        self.value += 1
        return self.value - 1


def next_pair_pure(pair, log: RoundLog, rule: str, mu: float, n_universe: int, rng: Rng,
                   uid: int = 0, lineage_id: int = 0):
    """Keep A or B (fair coin, or the one with more clicks) and challenge it with a mutant.

    Returns ``(new_pair, decision)``.
    """
    if rule == "random":
        keep_b = rng.coin()
    elif rule == "most_clicked":
        if log.arm_a.clicks == log.arm_b.clicks:
            keep_b = rng.coin()
        else:
            keep_b = log.arm_b.clicks > log.arm_a.clicks
    else:
        raise InvalidInputError(f"unknown keep rule {rule!r}")
    kept = pair[1] if keep_b else pair[0]
    return (kept, mutate(kept, mu, n_universe, rng, uid, lineage_id)), ("keep_b" if keep_b else "keep_a")


def next_pair_ab(pair, log: RoundLog, threshold: float, mu: float, n_universe: int, rng: Rng,
                 uid: int = 0, lineage_id: int = 0):
    """Bayesian A/B selection: promote B if Pr(p_B > p_A) > threshold, else keep A."""
    stats_a = ArmStats.from_impressions(log.arm_a.clicks, log.arm_a.impressions)
    stats_b = ArmStats.from_impressions(log.arm_b.clicks, log.arm_b.impressions)
    verdict = decide(stats_a, stats_b, threshold)
    control = pair[1] if verdict.action == "promote_variant" else pair[0]
    return (control, mutate(control, mu, n_universe, rng, uid, lineage_id)), verdict.action


@dataclass
class ReplicaResult:
    replica_index: int
    seed: int
    round_logs: list[RoundLog]
    final_control: PackageGenotype
    n_edges: int = 0

    def feature_frequency(self, n_universe: int) -> np.ndarray:
        """(rounds, M) 0/1 matrix: feature membership of each round's control package."""
        out = np.zeros((len(self.round_logs), n_universe))
        for t, log in enumerate(self.round_logs):
            out[t, list(log.arm_a.genotype.features)] = 1.0
        return out

    def to_json(self) -> dict:
        def arm(name, a: ArmLog):
            return {
                "arm": name,
                "genotype": str(a.genotype),
                "uid": a.genotype.uid,
                "parent": a.genotype.parent_id,
                "born": a.genotype.lineage_id,
                "impressions": a.impressions,
                "clicks": a.clicks,
            }

        return {
            "replica": self.replica_index,
            "seed": self.seed,
            "n_edges": self.n_edges,
            "final_control": str(self.final_control),
            "rounds": [
                {"round": log.round_index, "decision": log.decision, "steps": log.steps,
                 "arms": [arm("A", log.arm_a), arm("B", log.arm_b)]}
                for log in self.round_logs
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ReplicaResult":
        def arm(d) -> ArmLog:
            g = PackageGenotype(PackageGenotype.parse(d["genotype"]), d.get("born", 0), d.get("parent"), d.get("uid", 0))
            return ArmLog(g, int(d["impressions"]), int(d["clicks"]))

        logs = [RoundLog(r["round"], arm(r["arms"][0]), arm(r["arms"][1]), r["decision"], r["steps"])
                for r in data["rounds"]]
        final = PackageGenotype(PackageGenotype.parse(data["final_control"]))
        return cls(int(data["replica"]), int(data["seed"]), logs, final, int(data.get("n_edges", 0)))


def replica_seed(master_seed: int, replica_index: int) -> int:
    return derive_seed(master_seed, replica_index)


def run_replica(config: SimConfig, model: DecisionModel, replica_index: int) -> ReplicaResult:
    """One full replica; bit-for-bit determined by ``(config, model, replica_index)``."""
    config.validate()
    if model.n_features != config.feature_universe:
        raise InvalidInputError(
            f"decision model has {model.n_features} weights, feature_universe is {config.feature_universe}"
        )
    seed = replica_seed(config.master_seed, replica_index)
    rng = Rng(seed)
    graph = config.graph_spec().build(rng.next_u64())
    ids = _Ids()
    M, mu = config.feature_universe, config.mutation_rate
    first = random_package(M, config.n_features_per_package, rng, ids(), 0)
    pair = (first, mutate(first, mu, M, rng, ids(), 0))
    decision = "initial"
    logs = []
    for t in range(config.n_rounds):
        log = run_round(graph, model, pair, config, rng, t, decision)
        logs.append(log)
        if config.scenario == "pure":
            pair, decision = next_pair_pure(pair, log, config.pure_keep_rule, mu, M, rng, ids(), t + 1)
        else:
            pair, decision = next_pair_ab(pair, log, config.ab_threshold, mu, M, rng, ids(), t + 1)
    return ReplicaResult(replica_index, seed, logs, pair[0], graph.n_edges)


def _replica_task(args):
    config, model, index = args
    return run_replica(config, model, index)


def default_workers() -> int:
    env = os.environ.get(THREADS_ENV, "").strip()
    if env:
        try:
            value = int(env)
        except ValueError:
            raise InvalidInputError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        return max(1, value)
    return max(1, min(os.cpu_count() or 1, 8))


def run_experiment(config: SimConfig, model: DecisionModel, workers: int | None = None) -> list[ReplicaResult]:
    """All replicas in index order; results do not depend on ``workers``."""
    config.validate()
    workers = default_workers() if workers is None else max(1, int(workers))
    tasks = [(config, model, i) for i in range(config.n_replicas)]
    if workers == 1 or config.n_replicas == 1:
        return [_replica_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, config.n_replicas)) as pool:
        return list(pool.map(_replica_task, tasks))
