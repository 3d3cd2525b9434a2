"""Network topologies and doubly stochastic update matrices."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np

from ._random import stream

STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class Topology:
    """Undirected simple graph on nodes ``0..n-1``.

    Edges are stored as ``(i, j)`` pairs with ``i < j``.
    """

    n: int
    edges: frozenset[tuple[int, int]]

    def __init__(self, n: int, edges: Iterable[tuple[int, int]] = ()):
        if n < 1:
            raise ValueError(f"need at least one node, got n={n}")
        canon = set()
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self-loop at node {a}")
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"edge ({a}, {b}) out of range for n={n}")
            canon.add((min(a, b), max(a, b)))
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "edges", frozenset(canon))

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return tuple(tuple(sorted(nb)) for nb in adj)

    @cached_property
    def degrees(self) -> tuple[int, ...]:
        return tuple(len(nb) for nb in self.neighbors)

    @property
    def max_degree(self) -> int:
        return max(self.degrees)

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        for a, b in self.edges:
            A[a, b] = A[b, a] = 1.0
        return A

    def laplacian(self) -> np.ndarray:
        A = self.adjacency()
        return np.diag(A.sum(axis=1)) - A

    def without(self, removed: Iterable[int]) -> tuple[Topology, list[int]]:
        """Induced subgraph on the remaining nodes, relabelled ``0..m-1``.

        Returns the subgraph and the list mapping new labels to old ones.
        """
        drop = set(removed)
        keep = [v for v in range(self.n) if v not in drop]
        index = {v: i for i, v in enumerate(keep)}
        edges = [(index[a], index[b]) for a, b in self.edges if a in index and b in index]
        return Topology(max(len(keep), 1), edges), keep

    def to_edgelist(self) -> str:
        lines = [str(self.n)] + [f"{a} {b}" for a, b in self.sorted_edges()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edgelist(cls, text: str) -> Topology:
        rows = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
        rows = [r for r in rows if r]
        if not rows:
            raise ValueError("empty edge list")
        n = int(rows[0])
        edges = []
        for r in rows[1:]:
            parts = r.split()
            if len(parts) != 2:
                raise ValueError(f"bad edge line: {r!r}")
            edges.append((int(parts[0]), int(parts[1])))
        return cls(n, edges)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_edgelist())

    @classmethod
    def read(cls, path: str | Path) -> Topology:
        return cls.from_edgelist(Path(path).read_text())


def generate_erdos_renyi(n: int, p_edge: float, seed: int) -> Topology:
    """G(n, p) graph; pairs are visited in lexicographic order, one draw each."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not 0.0 <= p_edge <= 1.0:
        raise ValueError(f"p_edge must lie in [0, 1], got {p_edge}")
    iu, ju = np.triu_indices(n, k=1)
    draws = stream(seed, "erdos-renyi").random(iu.size)
    keep = draws < p_edge
    return Topology(n, zip(iu[keep].tolist(), ju[keep].tolist()))


def is_connected(t: Topology) -> bool:
    seen = {0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for u in t.neighbors[v]:
            if u not in seen:
                seen.add(u)
                queue.append(u)
    return len(seen) == t.n


def connected_erdos_renyi(n: int, p_edge: float, seed: int, max_tries: int = 10_000) -> tuple[Topology, int]:
    """Resample with seed, seed+1, ... until connected; returns the graph and the seed used."""
    for s in range(seed, seed + max_tries):
        t = generate_erdos_renyi(n, p_edge, s)
        if is_connected(t):
            return t, s
    raise RuntimeError(f"no connected G({n}, {p_edge}) found in {max_tries} seeds from {seed}")


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Doubly stochastic update matrix supported on a topology."""

    topology: Topology
    matrix: np.ndarray
    scheme: str
    gamma: float | None = None
    _rows: tuple = field(init=False, repr=False, default=())
    _lookup: tuple = field(init=False, repr=False, default=())

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        check_doubly_stochastic(m, self.topology)
        rows = tuple(
            tuple((l, float(m[i, l])) for l in self.topology.neighbors[i]) for i in range(self.topology.n)
        )
        object.__setattr__(self, "_rows", rows)
        object.__setattr__(self, "_lookup", tuple(dict(r) for r in rows))

    @property
    def n(self) -> int:
        return self.topology.n

    def __getitem__(self, ij):
        return self.matrix[ij]

    def weight(self, i: int, j: int) -> float:
        if i == j:
            return float(self.matrix[i, i])
        return self._lookup[i].get(j, 0.0)

    def neighbor_weights(self, i: int) -> tuple[tuple[int, float], ...]:
        """``((l, w_il), ...)`` over the neighbours of ``i``, self excluded."""
        return self._rows[i]


def check_doubly_stochastic(m: np.ndarray, t: Topology, tol: float = STOCHASTIC_TOL) -> None:
    if m.shape != (t.n, t.n):
        raise ValueError(f"matrix shape {m.shape} does not match n={t.n}")
    if np.any(m < -tol):
        raise ValueError("weight matrix has negative entries")
    if np.max(np.abs(m.sum(axis=1) - 1.0)) > tol or np.max(np.abs(m.sum(axis=0) - 1.0)) > tol:
        raise ValueError("weight matrix is not doubly stochastic")
    off = m.copy()
    np.fill_diagonal(off, 0.0)
    nz = np.argwhere(np.abs(off) > 0)
    for a, b in nz:
        if not t.has_edge(int(a), int(b)):
            raise ValueError(f"nonzero weight on non-edge ({a}, {b})")


def perron_weights(t: Topology, gamma: float) -> WeightMatrix:
    """``W = I - gamma * L`` with ``0 < gamma < 1 / d_max``."""
    d_max = t.max_degree
    upper = 1.0 / d_max if d_max > 0 else np.inf
    if not 0.0 < gamma < upper:
        raise ValueError(f"gamma must lie in (0, 1/d_max) = (0, {upper}), got {gamma}")
    W = np.eye(t.n) - gamma * t.laplacian()
    return WeightMatrix(t, W, "perron", float(gamma))


def default_gamma(t: Topology) -> float:
    return 0.9 / t.max_degree if t.max_degree > 0 else 0.5


def metropolis_weights(t: Topology) -> WeightMatrix:
    deg = t.degrees
    W = np.zeros((t.n, t.n))
    for a, b in t.edges:
        W[a, b] = W[b, a] = 1.0 / (1.0 + max(deg[a], deg[b]))
    for i in range(t.n):
        W[i, i] = 1.0 - W[i].sum()
    return WeightMatrix(t, W, "metropolis")


def build_weights(t: Topology, scheme: str = "perron", gamma: float | None = None) -> WeightMatrix:
    if scheme == "perron":
        return perron_weights(t, default_gamma(t) if gamma is None else gamma)
    if scheme == "metropolis":
        return metropolis_weights(t)
    raise ValueError(f"unknown weight scheme {scheme!r}")
