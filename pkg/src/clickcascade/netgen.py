"""Synthetic social network generators: Erdős–Rényi, Barabási–Albert, SBM."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .errors import InvalidInputError
from .rng import Rng


class Graph:
    """Immutable undirected simple graph with sorted adjacency lists."""

    __slots__ = ("n_nodes", "adjacency", "_indptr", "_indices")

    def __init__(self, n_nodes: int, edges: Sequence[tuple[int, int]] = ()):
        if n_nodes < 1:
            raise InvalidInputError("graph needs at least one node")
        nbrs: list[set[int]] = [set() for _ in range(n_nodes)]
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise InvalidInputError(f"self-loop at node {i}")
            if not (0 <= i < n_nodes and 0 <= j < n_nodes):
                raise InvalidInputError(f"edge ({i}, {j}) outside [0, {n_nodes})")
            nbrs[i].add(j)
            nbrs[j].add(i)
        self.n_nodes = n_nodes
        self.adjacency = tuple(tuple(sorted(s)) for s in nbrs)
        lengths = np.fromiter((len(a) for a in self.adjacency), dtype=np.int64, count=n_nodes)
        self._indptr = np.zeros(n_nodes + 1, dtype=np.int64)
        np.cumsum(lengths, out=self._indptr[1:])
        self._indices = np.fromiter(
            (j for a in self.adjacency for j in a), dtype=np.int64, count=int(self._indptr[-1])
        )
        self._indptr.flags.writeable = False
        self._indices.flags.writeable = False

    @property
    def n_edges(self) -> int:
        return int(self._indptr[-1]) // 2

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        return self._indptr, self._indices

    def degrees(self) -> np.ndarray:
        return np.diff(self._indptr)

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, adj in enumerate(self.adjacency) for j in adj if i < j]

    def __eq__(self, other):
        return isinstance(other, Graph) and self.n_nodes == other.n_nodes and self.adjacency == other.adjacency

    def __hash__(self):
        return hash((self.n_nodes, self.adjacency))

    def __repr__(self):
        return f"Graph(n_nodes={self.n_nodes}, n_edges={self.n_edges})"

    def write_edgelist(self, path: str | Path) -> None:
        lines = [f"n={self.n_nodes}"] + [f"{i} {j}" for i, j in self.edges()]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def read_edgelist(cls, path: str | Path) -> "Graph":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith("n="):
            raise InvalidInputError(f"{path}: missing 'n=<count>' header")
        n = int(lines[0][2:])
        edges = []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise InvalidInputError(f"{path}:{lineno}: expected 'i j'")
            edges.append((int(parts[0]), int(parts[1])))
        return cls(n, edges)


def _from_pairs(n: int, rows: np.ndarray, cols: np.ndarray) -> Graph:
    return Graph(n, zip(rows.tolist(), cols.tolist()))


def erdos_renyi(n: int, p: float, seed: int = 0) -> Graph:
    """G(n, p): every unordered pair is an edge independently with probability ``p``."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError("p must lie in [0, 1]")
    rng = Rng(seed)
    rows, cols = kernels.bernoulli_pairs(np.zeros(n, dtype=np.int64), np.array([[float(p)]]), rng.state)
    return _from_pairs(n, rows, cols)


def barabasi_albert(n: int, m: int, seed: int = 0) -> Graph:
    """Preferential attachment grown from a complete graph on ``m + 1`` nodes.

    Each new node links to ``m`` distinct existing nodes, drawn with
    probability proportional to degree; duplicate draws are discarded. The
    result has ``(m + 1) m / 2 + m (n - m - 1)`` edges.
    """
    if m < 1:
        raise InvalidInputError("m must be >= 1")
    if n <= m + 1:
        raise InvalidInputError(f"need n >= m + 2 (got n={n}, m={m})")
    rng = Rng(seed)
    edges = [(i, j) for i in range(m + 1) for j in range(i + 1, m + 1)]
    # each node appears once per unit of degree
    stubs = [v for e in edges for v in e]
    for new in range(m + 1, n):
        targets: list[int] = []
        while len(targets) < m:
            t = stubs[rng.randbelow(len(stubs))]
            if t not in targets:
                targets.append(t)
        for t in targets:
            edges.append((t, new))
            stubs.append(t)
            stubs.append(new)
    return Graph(n, edges)


def sbm(block_sizes: Sequence[int], block_matrix: Sequence[Sequence[float]], seed: int = 0) -> Graph:
    """Stochastic block model: pair (i, j) in blocks (a, b) is linked with probability ``P[a][b]``."""
    sizes = [int(s) for s in block_sizes]
    P = np.asarray(block_matrix, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] != len(sizes):
        raise InvalidInputError("block_matrix must be square with one row per block")
    if not np.array_equal(P, P.T):
        raise InvalidInputError("block_matrix must be symmetric")
    if np.any((P < 0) | (P > 1)):
        raise InvalidInputError("block probabilities must lie in [0, 1]")
    if any(s < 0 for s in sizes) or sum(sizes) < 1:
        raise InvalidInputError("block sizes must be non-negative and sum to >= 1")
    block_of = np.repeat(np.arange(len(sizes), dtype=np.int64), sizes)
    rng = Rng(seed)
    rows, cols = kernels.bernoulli_pairs(block_of, np.ascontiguousarray(P), rng.state)
    return _from_pairs(int(block_of.shape[0]), rows, cols)


def density(graph: Graph) -> float:
    """2E / (n (n - 1))."""
    n = graph.n_nodes
    if n < 2:
        raise InvalidInputError("density needs at least 2 nodes")
    return 2.0 * graph.n_edges / (n * (n - 1))


@dataclass(frozen=True)
class GraphSpec:
    """Topology name plus parameters; ``build(seed)`` makes the graph."""

    topology: str
    n_nodes: int
    p: float | None = None
    m: int | None = None
    block_sizes: tuple[int, ...] = field(default_factory=tuple)
    block_matrix: tuple[tuple[float, ...], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.topology == "erdos_renyi":
            if self.p is None or not 0.0 <= self.p <= 1.0:
                raise InvalidInputError("erdos_renyi needs p in [0, 1]")
        elif self.topology == "barabasi_albert":
            if self.m is None or not 1 <= self.m < self.n_nodes - 1:
                raise InvalidInputError("barabasi_albert needs 1 <= m < n_nodes - 1")
        elif self.topology == "sbm":
            if sum(self.block_sizes) != self.n_nodes:
                raise InvalidInputError("sbm block sizes must sum to n_nodes")
        else:
            raise InvalidInputError(f"unknown topology {self.topology!r}")

    @classmethod
    def from_dict(cls, data: dict, n_nodes: int) -> "GraphSpec":
        topo = data.get("topology")
        return cls(
            topology=topo,
            n_nodes=n_nodes,
            p=data.get("p"),
            m=data.get("m"),
            block_sizes=tuple(data.get("block_sizes", ())),
            block_matrix=tuple(tuple(r) for r in data.get("block_matrix", ())),
        )

    def to_dict(self) -> dict:
        if self.topology == "erdos_renyi":
            return {"topology": self.topology, "p": self.p}
        if self.topology == "barabasi_albert":
            return {"topology": self.topology, "m": self.m}
        return {
            "topology": self.topology,
            "block_sizes": list(self.block_sizes),
            "block_matrix": [list(r) for r in self.block_matrix],
        }

    def build(self, seed: int) -> Graph:
        if self.topology == "erdos_renyi":
            return erdos_renyi(self.n_nodes, self.p, seed)
        if self.topology == "barabasi_albert":
            return barabasi_albert(self.n_nodes, self.m, seed)
        return sbm(self.block_sizes, self.block_matrix, seed)
