"""Input graphs, seeded generators and the graph file format."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np

FAMILIES = ("random-gnm", "bounded-arboricity", "star", "path", "grid", "tree")
ALIASES = {"gnm": "random-gnm", "arboricity": "bounded-arboricity", "bounded": "bounded-arboricity"}


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class InputGraph:
    """Immutable simple undirected graph on ``0..n-1``.

    ``edges`` rows are ``(u, v)`` with ``u < v`` in ascending order; the
    adjacency is CSR with sorted neighbor lists and ``adj_edge`` mapping every
    slot back to its edge row.
    """

    n: int
    edges: np.ndarray
    weights: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(e):
            if e.min() < 0 or e.max() >= self.n:
                raise GraphError("edge endpoint outside 0..n-1")
            if np.any(e[:, 0] == e[:, 1]):
                raise GraphError("self-loop")
        lo, hi = np.minimum(e[:, 0], e[:, 1]), np.maximum(e[:, 0], e[:, 1])
        order = np.lexsort((hi, lo))
        e = np.stack([lo[order], hi[order]], axis=1)
        if len(e) and np.any(np.all(e[1:] == e[:-1], axis=1)):
            raise GraphError("parallel edge")
        w = None
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.int64)[order]
            if len(w) and w.min() < 1:
                raise GraphError("weights must be positive integers")
            w.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "weights", w)
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        eid = np.concatenate([np.arange(len(e)), np.arange(len(e))])
        o = np.lexsort((dst, src))
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        object.__setattr__(self, "indptr", np.cumsum(indptr))
        object.__setattr__(self, "indices", dst[o])
        object.__setattr__(self, "adj_edge", eid[o])
        object.__setattr__(self, "adj_src", src[o])

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def weighted(self) -> bool:
        return self.weights is not None

    @property
    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def edge_ids(self) -> np.ndarray:
        """``id(u) ∘ id(v)`` for ``u < v`` packed as ``u * n + v``."""
        return self.edges[:, 0] * self.n + self.edges[:, 1]

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    def with_weights(self, weights) -> "InputGraph":
        return InputGraph(self.n, self.edges, weights, dict(self.meta))

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        if self.weighted:
            g.add_weighted_edges_from((int(u), int(v), int(w)) for (u, v), w in zip(self.edges, self.weights))
        else:
            g.add_edges_from(map(tuple, self.edges.tolist()))
        return g

    def __repr__(self):
        return f"InputGraph(n={self.n}, m={self.m}{', weighted' if self.weighted else ''})"


def _prufer_tree(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random labelled tree on n nodes."""
    if n <= 1:
        return np.zeros((0, 2), dtype=np.int64)
    if n == 2:
        return np.array([[0, 1]], dtype=np.int64)
    seq = rng.integers(0, n, n - 2)
    t = nx.from_prufer_sequence(seq.tolist())
    return np.asarray(list(t.edges()), dtype=np.int64)


def _gnm(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    total = n * (n - 1) // 2
    if m > total:
        raise GraphError(f"m={m} exceeds n(n-1)/2={total}")
    if m == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if m > total // 2:
        idx = rng.choice(total, size=m, replace=False)
    else:
        got = np.zeros(0, dtype=np.int64)
        while len(got) < m:
            got = np.unique(np.concatenate([got, rng.integers(0, total, 2 * (m - len(got)) + 8)]))
        idx = rng.permutation(got)[:m]
    # unrank pair index -> (u, v), u < v, row-major over the upper triangle
    u = (n - 2 - np.floor(np.sqrt(-8.0 * idx + 4.0 * n * (n - 1) - 7) / 2.0 - 0.5)).astype(np.int64)
    v = idx + u + 1 - n * (n - 1) // 2 + (n - u) * ((n - u) - 1) // 2
    return np.stack([u, v], axis=1)


def gen_graph(family: str, n: int, seed: int = 0, m: int | None = None, a: int | None = None,
              weighted: bool = False, weight_exp: float = 2.0) -> InputGraph:
    """Seeded graph from one of :data:`FAMILIES`."""
    family = ALIASES.get(family, family)
    if family not in FAMILIES:
        raise GraphError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    if n < 1:
        raise GraphError("n must be at least 1")
    rng = np.random.default_rng([int(seed), 0x9A9])
    meta: dict = {"family": family, "seed": int(seed)}
    if family == "random-gnm":
        if m is None:
            m = min(2 * n, n * (n - 1) // 2)
        if m < 0:
            raise GraphError("m must be non-negative")
        edges = _gnm(n, m, rng)
    elif family == "bounded-arboricity":
        a = 2 if a is None else a
        if a < 1:
            raise GraphError("a must be at least 1")
        edges = np.concatenate([_prufer_tree(n, rng) for _ in range(a)]) if n > 1 else np.zeros((0, 2), np.int64)
        if len(edges):
            edges = np.unique(np.sort(edges, axis=1), axis=0)
        meta["a_construction"] = int(a)
    elif family == "star":
        edges = np.stack([np.zeros(n - 1, np.int64), np.arange(1, n)], axis=1)
        meta["a_construction"] = 1
    elif family == "path":
        edges = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
        meta["a_construction"] = 1
    elif family == "grid":
        rows = max(1, int(math.isqrt(n)))
        cols = -(-n // rows)
        idx = np.arange(n)
        r, c = idx // cols, idx % cols
        right = idx[(c + 1 < cols) & (idx + 1 < n)]
        down = idx[idx + cols < n]
        edges = np.concatenate([np.stack([right, right + 1], 1), np.stack([down, down + cols], 1)])
        meta["a_construction"] = 2
    else:
        edges = _prufer_tree(n, rng)
        meta["a_construction"] = 1
    weights = None
    if weighted:
        W = max(1, math.ceil(n ** weight_exp))
        meta["W"] = W
        weights = rng.integers(1, W + 1, len(edges))
    return InputGraph(n, edges, weights, meta)


def read_graph(path) -> InputGraph:
    """Read ``n m [weighted]`` followed by ``u v [w]`` lines; ``#`` comments."""
    lines = []
    for raw in Path(path).read_text().splitlines():
        s = raw.split("#", 1)[0].strip()
        if s:
            lines.append(s.split())
    if not lines:
        raise GraphError(f"{path}: empty graph file")
    head = lines[0]
    n, m = int(head[0]), int(head[1])
    weighted = len(head) > 2 and head[2] == "weighted"
    body = lines[1:]
    if len(body) != m:
        raise GraphError(f"{path}: header says {m} edges, found {len(body)}")
    arr = np.asarray([[int(x) for x in row] for row in body], dtype=np.int64).reshape(m, -1)
    if weighted and arr.shape[1] < 3:
        raise GraphError(f"{path}: weighted graph needs 'u v w' lines")
    return InputGraph(n, arr[:, :2], arr[:, 2] if weighted else None, {"source": str(path)})


def write_graph(g: InputGraph, path) -> None:
    out = [f"{g.n} {g.m}" + (" weighted" if g.weighted else "")]
    for k, (u, v) in enumerate(g.edges.tolist()):
        out.append(f"{u} {v} {int(g.weights[k])}" if g.weighted else f"{u} {v}")
    Path(path).write_text("\n".join(out) + "\n")
