"""Communication graphs and doubly stochastic mixing matrices."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import FrozenSet, Iterable, Optional, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

MAX_RGG_ATTEMPTS = 10_000
STOCHASTIC_ATOL = 1e-12


class RadiusTooSmallError(ValueError):
    """Raised when no connected geometric graph was found within the attempt budget."""

    def __init__(self, radius: float, attempts: int):
        self.radius = radius
        self.attempts = attempts
        super().__init__(
            f"radius too small: no connected graph with radius {radius} "
            f"after {attempts} attempts"
        )


def _normalise_edges(m: int, edges: Iterable[Tuple[int, int]]) -> FrozenSet[Tuple[int, int]]:
    out = set()
    for i, j in edges:
        i, j = int(i), int(j)
        if not (0 <= i < m and 0 <= j < m):
            raise ValueError(f"edge ({i}, {j}) out of range for m = {m}")
        if i == j:
            raise ValueError(f"self-loop ({i}, {i}) is not allowed")
        out.add((min(i, j), max(i, j)))
    return frozenset(out)


def is_connected(m: int, edges: Iterable[Tuple[int, int]]) -> bool:
    edges = list(edges)
    if m <= 1:
        return True
    if not edges:
        return False
    rows, cols = zip(*edges)
    adj = csr_matrix((np.ones(len(edges)), (rows, cols)), shape=(m, m))
    n_comp, _ = connected_components(adj, directed=False)
    return n_comp == 1


@dataclass(frozen=True, eq=False)
class Topology:
    m: int
    edges: FrozenSet[Tuple[int, int]]
    positions: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"need at least one agent, got m = {self.m}")
        edges = _normalise_edges(self.m, self.edges)
        object.__setattr__(self, "edges", edges)
        if not is_connected(self.m, edges):
            raise ValueError("topology is not connected")
        if self.positions is not None:
            pos = np.asarray(self.positions, dtype=float)
            if pos.shape != (self.m, 2):
                raise ValueError(f"positions must have shape ({self.m}, 2), got {pos.shape}")
            object.__setattr__(self, "positions", pos)

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.m, dtype=np.int64)
        for i, j in self.edges:
            d[i] += 1
            d[j] += 1
        return d

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.m, self.m), dtype=bool)
        for i, j in self.edges:
            adj[i, j] = adj[j, i] = True
        return adj


def complete_graph(m: int) -> Topology:
    return Topology(m, frozenset((i, j) for i in range(m) for j in range(i + 1, m)))


def ring_graph(m: int) -> Topology:
    if m <= 2:
        return complete_graph(m)
    return Topology(m, frozenset((i, (i + 1) % m) for i in range(m)))


def random_geometric_graph(m: int, radius: float, rng: np.random.Generator) -> Topology:
    """Uniform points on the unit square joined when within ``radius``.

    Whole layouts are redrawn until the graph is connected.
    """
    if m < 1:
        raise ValueError(f"need at least one agent, got m = {m}")
    if not 0 < radius <= math.sqrt(2):
        raise ValueError(f"radius must lie in (0, sqrt(2)], got {radius}")
    iu, ju = np.triu_indices(m, k=1)
    for _ in range(MAX_RGG_ATTEMPTS):
        pos = rng.random((m, 2))
        dist = np.hypot(*(pos[iu] - pos[ju]).T)
        close = dist <= radius
        edges = list(zip(iu[close].tolist(), ju[close].tolist()))
        if is_connected(m, edges):
            return Topology(m, frozenset(edges), pos)
    raise RadiusTooSmallError(radius, MAX_RGG_ATTEMPTS)


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    weights: np.ndarray

    def __post_init__(self):
        A = np.array(self.weights, dtype=float)
        m = A.shape[0]
        if A.ndim != 2 or A.shape != (m, m) or m < 1:
            raise ValueError(f"mixing matrix must be square, got shape {A.shape}")
        if np.any(A < 0) or not np.all(np.isfinite(A)):
            raise ValueError("mixing weights must be finite and non-negative")
        if not np.allclose(A.sum(axis=1), 1.0, rtol=0, atol=STOCHASTIC_ATOL):
            raise ValueError("rows of the mixing matrix must sum to 1")
        if not np.allclose(A.sum(axis=0), 1.0, rtol=0, atol=STOCHASTIC_ATOL):
            raise ValueError("columns of the mixing matrix must sum to 1")
        if not np.allclose(A, A.T, rtol=0, atol=STOCHASTIC_ATOL):
            raise ValueError("mixing matrix must be symmetric")
        if np.any(np.diag(A) <= 0):
            raise ValueError("every diagonal weight must be positive (aperiodicity)")
        A.setflags(write=False)
        object.__setattr__(self, "weights", A)

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def eta(self) -> float:
        """Smallest strictly positive weight."""
        return float(self.weights[self.weights > 0].min())

    @property
    def lambda_bound(self) -> float:
        return 1.0 - self.eta / (4.0 * self.m**2)

    def respects(self, topology: Topology) -> bool:
        """True when every positive off-diagonal weight sits on an edge of ``topology``."""
        off = self.weights > 0
        np.fill_diagonal(off, False)
        return topology.m == self.m and not np.any(off & ~topology.adjacency())

    def gap_bound(self, t: int) -> float:
        return math.sqrt(2) * self.m * self.lambda_bound**t


def lazy_metropolis(topology: Topology) -> MixingMatrix:
    """A_ij = 1 / (2 max(d_i, d_j)) on edges, diagonal fills rows to 1."""
    m = topology.m
    d = topology.degrees()
    A = np.zeros((m, m))
    for i, j in topology.edges:
        A[i, j] = A[j, i] = 1.0 / (2.0 * max(d[i], d[j]))
    np.fill_diagonal(A, 0.0)
    np.fill_diagonal(A, 1.0 - A.sum(axis=1))
    return MixingMatrix(A)


def uniform_mixing(m: int) -> MixingMatrix:
    """The averaging matrix (1/m) 11'."""
    return MixingMatrix(np.full((m, m), 1.0 / m))


def spectral_norm(M: np.ndarray, rtol: float = 1e-12, max_iter: int = 1_000_000) -> float:
    """Largest singular value by power iteration on M'M from a fixed start vector."""
    M = np.asarray(M, dtype=float)
    G = M.T @ M
    scale = np.abs(G).max()
    if scale == 0.0:
        return 0.0
    G = G / scale
    v = np.random.default_rng(0x5EED).standard_normal(G.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = G @ v
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - est) <= rtol * new:
            est = new
            break
        est = new
    return math.sqrt(est * scale)


def consensus_gap(matrix: MixingMatrix, t: int) -> float:
    """Spectral norm of A^t - (1/m) 11'."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    m = matrix.m
    At = np.linalg.matrix_power(matrix.weights, t)
    return spectral_norm(At - np.full((m, m), 1.0 / m))


def write_edge_list(topology: Topology, path) -> None:
    lines = [str(topology.m)] + [f"{i} {j}" for i, j in sorted(topology.edges)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path) -> Topology:
    """Parse the edge-list format: first line ``m``, then one ``i j`` pair per line (0-based)."""
    text = Path(path).read_text().splitlines()
    rows = [(n, line.split()) for n, line in enumerate(text, 1) if line.strip()]
    if not rows:
        raise ValueError(f"{path}: empty edge list")
    (_, first), *rest = rows
    try:
        if len(first) != 1:
            raise ValueError
        m = int(first[0])
    except ValueError:
        raise ValueError(f"{path}:{rows[0][0]}: expected agent count on the first line") from None
    edges = []
    for lineno, parts in rest:
        try:
            i, j = (int(p) for p in parts)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: expected 'i j', got {' '.join(parts)!r}") from None
        edges.append((i, j))
    return Topology(m, frozenset(edges))


def write_matrix_csv(matrix: MixingMatrix, path) -> None:
    np.savetxt(path, matrix.weights, delimiter=",", fmt="%.17g")
