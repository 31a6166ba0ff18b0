"""Directed graphs with self-loops, row-stochastic mixing matrices on them,
and the spectral quantities (Perron vector, spectral gap) that govern mixing.

Conventions
-----------
An edge ``(j, i)`` means *j sends to i*. Agent ``i`` mixes the values of its
in-neighbours, so ``A[i, j] > 0`` only if ``(j, i)`` is an edge. Every node
carries a self-loop and ``in_neighbors[i]`` always contains ``i``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from d3gd import rng

ROW_SUM_TOL = 1e-12


class GraphError(ValueError):
    """Malformed graph or a graph that violates strong connectivity."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class DirectedGraph:
    n: int
    edges: frozenset = field(repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise GraphError("graph needs at least one node")
        edges = set()
        for i, j in self.edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i}, {j}) out of range for n={self.n}")
            edges.add((int(i), int(j)))
        edges.update((i, i) for i in range(self.n))
        object.__setattr__(self, "edges", frozenset(edges))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "DirectedGraph":
        return cls(n, frozenset(edges))

    @property
    def in_neighbors(self) -> tuple[tuple[int, ...], ...]:
        nbrs = [[] for _ in range(self.n)]
        for j, i in self.edges:
            nbrs[i].append(j)
        return tuple(tuple(sorted(s)) for s in nbrs)

    @property
    def out_neighbors(self) -> tuple[tuple[int, ...], ...]:
        nbrs = [[] for _ in range(self.n)]
        for j, i in self.edges:
            nbrs[j].append(i)
        return tuple(tuple(sorted(s)) for s in nbrs)

    def in_degree(self, i: int) -> int:
        """In-degree not counting the self-loop."""
        return len(self.in_neighbors[i]) - 1

    @property
    def support(self) -> np.ndarray:
        """Boolean mask with ``support[i, j]`` true iff ``(j, i)`` is an edge."""
        mask = np.zeros((self.n, self.n), dtype=bool)
        for j, i in self.edges:
            mask[i, j] = True
        return mask

    @property
    def num_edges(self) -> int:
        return len(self.edges)


class Connectivity(NamedTuple):
    strongly_connected: bool
    reachable_from_root: frozenset
    reaching_root: frozenset


def _bfs(adj, root):
    seen = {root}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return frozenset(seen)


def check_strong_connectivity(g: DirectedGraph) -> Connectivity:
    """Two-pass reachability from node 0 (forward and on the reversed graph).

    Aperiodicity is not checked: every node has a self-loop, which makes any
    strongly connected graph here aperiodic.
    """
    forward = _bfs(g.out_neighbors, 0)
    backward = _bfs(g.in_neighbors, 0)
    ok = len(forward) == g.n and len(backward) == g.n
    return Connectivity(ok, forward, backward)


def _require_strongly_connected(g):
    if not check_strong_connectivity(g).strongly_connected:
        raise GraphError("graph is not strongly connected")


def directed_ring(n: int) -> DirectedGraph:
    """Ring ``0 -> 1 -> ... -> n-1 -> 0`` with self-loops."""
    return DirectedGraph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def complete_digraph(n: int) -> DirectedGraph:
    return DirectedGraph.from_edges(n, [(i, j) for i in range(n) for j in range(n)])


def generate_er_digraph(n: int, p: float, seed: int, max_retries: int = 1000) -> DirectedGraph:
    """Directed Erdos-Renyi graph, redrawn until strongly connected.

    Attempt ``t`` draws from its own stream so the result depends only on
    ``(n, p, seed)``.
    """
    if n < 2:
        raise GraphError("ER generation needs n >= 2")
    if not 0 < p <= 1:
        raise GraphError(f"p must lie in (0, 1], got {p}")
    off = ~np.eye(n, dtype=bool)
    for attempt in range(max_retries):
        u = rng.Stream(seed, rng.GRAPH, attempt).uniform((n, n))
        keep = (u < p) & off
        g = DirectedGraph.from_edges(n, zip(*np.nonzero(keep)))
        if check_strong_connectivity(g).strongly_connected:
            return g
    raise GraphError(f"no strongly connected ER digraph after {max_retries} retries (n={n}, p={p}, seed={seed})")


class MixingMatrix:
    """Row-stochastic matrix confined to a graph's support.

    The weight array is stored read-only; construct a new matrix to change it.
    """

    __slots__ = ("graph", "weights")

    def __init__(self, graph: DirectedGraph, weights, *, tol: float = ROW_SUM_TOL):
        W = np.array(weights, dtype=np.float64)
        if W.shape != (graph.n, graph.n):
            raise ValueError(f"weights shape {W.shape} does not match n={graph.n}")
        if np.any(W < 0) or np.any(W > 1):
            raise ValueError("mixing weights must lie in [0, 1]")
        if np.any(W[~graph.support] != 0):
            raise ValueError("nonzero weight outside the graph support")
        dev = np.max(np.abs(W.sum(axis=1) - 1.0))
        if dev > tol:
            raise ValueError(f"rows must sum to 1 (max deviation {dev:.3e})")
        W.setflags(write=False)
        object.__setattr__(self, "graph", graph)
        object.__setattr__(self, "weights", W)

    def __setattr__(self, name, value):
        raise AttributeError("MixingMatrix is immutable")

    @property
    def n(self):
        return self.graph.n

    def __array__(self, dtype=None, copy=None):
        return self.weights if dtype is None else self.weights.astype(dtype)

    def __repr__(self):
        return f"MixingMatrix(n={self.n})"

    def to_csv(self, path):
        write_matrix_csv(path, self.weights)

    def to_dot(self, path=None, names=None):
        text = matrix_to_dot(self.weights, names)
        if path is not None:
            Path(path).write_text(text)
        return text


def uniform_in_weights(g: DirectedGraph) -> MixingMatrix:
    """``A[i, j] = 1 / (|N_i| + 1)`` with ``|N_i|`` the in-degree excluding the self-loop."""
    _require_strongly_connected(g)
    W = np.zeros((g.n, g.n))
    for i, nbrs in enumerate(g.in_neighbors):
        W[i, list(nbrs)] = 1.0 / len(nbrs)
    return MixingMatrix(g, W)


def metropolis_weights(g: DirectedGraph) -> MixingMatrix:
    """In-degree Metropolis rule ``1 / (1 + max(d_i, d_j))``; the diagonal absorbs the rest.

    Reduces to the usual Metropolis-Hastings weights on symmetric graphs.
    """
    _require_strongly_connected(g)
    deg = [g.in_degree(i) for i in range(g.n)]
    W = np.zeros((g.n, g.n))
    for i, nbrs in enumerate(g.in_neighbors):
        for j in nbrs:
            if j != i:
                W[i, j] = 1.0 / (1.0 + max(deg[i], deg[j]))
        W[i, i] = 1.0 - W[i].sum()
        if W[i, i] < 0:
            raise GraphError(f"negative self-weight at node {i}")
    return MixingMatrix(g, W)


def _weights(A):
    return A.weights if isinstance(A, MixingMatrix) else np.asarray(A, dtype=np.float64)


def default_max_iter(n: int) -> int:
    return int(100 * n * math.log(max(n, 2))) + 1000


def perron_vector(A, tol: float = 1e-12, max_iter: int | None = None, start=None):
    """Left Perron vector by power iteration on ``A^T`` with sum normalisation.

    Returns ``(pi, residual, iterations)``. Because ``A`` is row-stochastic each
    iterate already sums to one and the successive-iterate distance equals
    ``||pi^T A - pi^T||_inf``.
    """
    W = _weights(A)
    n = W.shape[0]
    if max_iter is None:
        max_iter = default_max_iter(n)
    pi = np.full(n, 1.0 / n) if start is None else np.asarray(start, dtype=np.float64) / np.sum(start)
    WT = W.T.copy()
    residual = np.inf
    for it in range(1, max_iter + 1):
        nxt = WT @ pi
        nxt /= nxt.sum()
        residual = np.max(np.abs(nxt - pi))
        pi = nxt
        if residual < tol:
            return pi, residual, it
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps", residual)


def spectral_gap(A, pi, window: int = 200, starts: int = 4, seed: int = 0) -> float:
    """Spectral gap ``1 - r`` where ``r`` estimates the spectral radius of ``A - 1 pi^T``.

    ``r`` is the geometric growth rate of ``||B^k v||`` over ``k in (m, 2m]``,
    maximised over several random unit starts; the deflated matrix of a
    digraph can have complex eigenvalue pairs where plain power iteration
    oscillates instead of converging.
    """
    W = _weights(A)
    n = W.shape[0]
    if n == 1:
        return 1.0
    m = max(int(window), 50)
    B = W - np.outer(np.ones(n), pi)
    V = rng.Stream(seed, rng.AUX, 7).normals((n, max(int(starts), 4)))
    V /= np.linalg.norm(V, axis=0)
    logs = np.zeros(V.shape[1])
    alive = np.ones(V.shape[1], dtype=bool)
    for k in range(1, 2 * m + 1):
        V = B @ V
        norms = np.linalg.norm(V, axis=0)
        dead = norms < 1e-300
        alive &= ~dead
        norms[dead] = 1.0
        if k > m:
            logs += np.log(norms)
        V /= norms
        if not alive.any():
            break
    if not alive.any():
        return 1.0
    r = float(np.exp(np.max(logs[alive]) / m))
    return float(min(1.0, max(1.0 - r, np.finfo(float).tiny)))


@dataclass(frozen=True)
class SpectralReport:
    perron: np.ndarray
    spectral_gap: float
    residual: float
    gap_method: str = "norm-growth"


def spectral_report(A, tol: float = 1e-12, max_iter: int | None = None) -> SpectralReport:
    pi, residual, _ = perron_vector(A, tol, max_iter)
    return SpectralReport(pi, spectral_gap(A, pi), float(residual))


# ---------------------------------------------------------------- file formats


def read_edgelist(path, n: int | None = None) -> DirectedGraph:
    """Read ``i j`` pairs (0-based, ``#`` comments). ``n`` defaults to max index + 1."""
    edges = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphError(f"bad edge line: {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    if n is None:
        n = 1 + max((max(e) for e in edges), default=0)
    return DirectedGraph.from_edges(n, edges)


def write_edgelist(g: DirectedGraph, path):
    lines = [f"# n={g.n}"] + [f"{i} {j}" for i, j in sorted(g.edges)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_matrix_csv(path, M):
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    rows = (",".join(format(x, ".17g") for x in row) for row in M)
    Path(path).write_text("\n".join(rows) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def matrix_to_dot(W, names=None) -> str:
    W = np.asarray(W)
    n = W.shape[0]
    names = names or [str(i) for i in range(n)]
    out = ["digraph G {"]
    out += [f'  "{names[i]}";' for i in range(n)]
    for i in range(n):
        for j in range(n):
            if W[i, j] != 0:
                out.append(f'  "{names[j]}" -> "{names[i]}" [label="{W[i, j]:.4f}"];')
    out.append("}")
    return "\n".join(out) + "\n"
