"""Power-law social graphs, edge-list files and high-degree preprocessing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _accel

ALPHA = 2.5  # degree exponent
MEAN_DEGREE = 6.0


class GenerationError(ValueError):
    pass


@dataclass
class Graph:
    """Undirected simple graph over node ids ``0..n-1``.  ``edges`` rows are
    ``(u, v)`` with ``u < v``, sorted and unique."""

    n: int
    edges: np.ndarray
    _csr: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            if (e[:, 0] == e[:, 1]).any():
                raise ValueError("self-loop in edge list")
            if e.min() < 0 or e.max() >= self.n:
                raise ValueError("edge endpoint outside node range")
            e = np.sort(e, axis=1)
            e = np.unique(e, axis=0)
        self.edges = e

    @property
    def m(self) -> int:
        return len(self.edges)

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        if self._csr is None:
            src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
            dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
            order = np.lexsort((dst, src))
            src, dst = src[order], dst[order]
            indptr = np.zeros(self.n + 1, dtype=np.int64)
            np.add.at(indptr, src + 1, 1)
            np.cumsum(indptr, out=indptr)
            self._csr = (indptr, dst)
        return self._csr

    def degree(self) -> np.ndarray:
        indptr, _ = self.csr()
        return np.diff(indptr)

    def neighbors(self, v: int) -> np.ndarray:
        indptr, indices = self.csr()
        return indices[indptr[v]:indptr[v + 1]]


def _pareto_degrees(n: int, mean: float, rng: np.random.Generator) -> np.ndarray:
    # continuous Pareto with tail exponent ALPHA - 1, floored; flooring
    # loses about half a unit of mean
    xmin = (mean + 0.5) * (ALPHA - 2) / (ALPHA - 1)
    x = xmin * (1.0 - rng.random(n)) ** (-1.0 / (ALPHA - 1))
    deg = np.floor(x).astype(np.int64)
    return np.clip(deg, 1, max(n - 1, 1))


def generate_powerlaw_graph(n_nodes: int, target_edges: int | None = None, seed: int = 0) -> Graph:
    """Configuration-model graph with power-law degrees (exponent 2.5).

    Self-loops and parallel edges are dropped after pairing, so the edge
    count lands slightly below ``target_edges`` (default ``3 * n_nodes``).
    """
    if n_nodes < 2:
        raise GenerationError("need at least two nodes")
    max_edges = n_nodes * (n_nodes - 1) // 2
    if target_edges is None:
        target_edges = min(int(MEAN_DEGREE * n_nodes / 2), max_edges)
    if not 1 <= target_edges <= max_edges:
        raise GenerationError(f"cannot place {target_edges} edges on {n_nodes} nodes")
    rng = np.random.default_rng(seed)
    if n_nodes == 2:
        return Graph(2, np.array([[0, 1]]))
    deg = _pareto_degrees(n_nodes, 2.0 * target_edges / n_nodes, rng)
    if deg.sum() % 2:
        deg[rng.integers(n_nodes)] += 1
    stubs = np.repeat(np.arange(n_nodes, dtype=np.int64), deg)
    rng.shuffle(stubs)
    pairs = stubs.reshape(-1, 2)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    return Graph(n_nodes, pairs)


def read_edge_list(path) -> Graph:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two node ids")
            rows.append((int(parts[0]), int(parts[1])))
    e = np.array(rows, dtype=np.int64).reshape(-1, 2)
    e = e[e[:, 0] != e[:, 1]]
    n = int(e.max()) + 1 if e.size else 0
    return Graph(n, e)


def write_edge_list(graph: Graph, path) -> None:
    with open(path, "w") as fh:
        for u, v in graph.edges.tolist():
            fh.write(f"{u} {v}\n")


def high_degree_threshold(degrees: np.ndarray) -> int:
    """Smallest q with at most q nodes of degree greater than q."""
    counts = np.bincount(degrees)
    # greater[q] = number of nodes with degree > q
    greater = len(degrees) - np.cumsum(counts)
    qs = np.nonzero(greater <= np.arange(len(greater)))[0]
    return int(qs[0]) if len(qs) else len(counts)


def closed_form_q(n_nodes: int) -> float:
    return (11.0 * n_nodes / 3.0) ** (1.0 / ALPHA)


@dataclass
class Preprocessed:
    q: int
    high: np.ndarray
    colors: np.ndarray  # -1 for uncoloured nodes


def preprocess_high_degree(graph: Graph) -> Preprocessed:
    """Colour the nodes of degree > q first, in decreasing degree order."""
    deg = graph.degree()
    q = high_degree_threshold(deg)
    high = np.nonzero(deg > q)[0]
    high = high[np.argsort(-deg[high], kind="stable")]
    indptr, indices = graph.csr()
    colors = np.full(graph.n, -1, dtype=np.int64)
    colors = _accel.greedy_color(indptr, indices, high, colors)
    return Preprocessed(q, high, colors)


def color_offline(graph: Graph, pre: Preprocessed | None = None) -> np.ndarray:
    """Sequential greedy colouring of everything left after preprocessing."""
    pre = pre or preprocess_high_degree(graph)
    indptr, indices = graph.csr()
    rest = np.nonzero(pre.colors < 0)[0]
    return _accel.greedy_color(indptr, indices, rest, pre.colors)


def is_proper(graph: Graph, colors) -> bool:
    colors = np.asarray(colors)
    if (colors[graph.edges] < 0).any():
        return False
    return bool((colors[graph.edges[:, 0]] != colors[graph.edges[:, 1]]).all())
