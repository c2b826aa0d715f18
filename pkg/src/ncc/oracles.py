"""Sequential ground truth and result checkers."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import DisjointSet
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from .graphs import InputGraph

UNREACHABLE = -1
KINDS = ("mst", "bfs", "mis", "matching", "coloring", "orientation")


@dataclass
class VerificationReport:
    kind: str
    diagnostics: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.diagnostics

    def __bool__(self):
        return self.passed

    def __repr__(self):
        head = "pass" if self.passed else f"fail: {self.diagnostics[0]}"
        return f"VerificationReport({self.kind}, {head})"


# -- oracles ---------------------------------------------------------------
def edge_order(g: InputGraph) -> np.ndarray:
    """Edge rows sorted by (weight, id(u) ∘ id(v))."""
    w = g.weights if g.weighted else np.ones(g.m, dtype=np.int64)
    return np.lexsort((g.edge_ids(), w))


def oracle_mst(g: InputGraph) -> tuple[set, int]:
    """Kruskal minimum spanning forest: (edge set, total weight)."""
    ds = DisjointSet(range(g.n))
    w = g.weights if g.weighted else np.ones(g.m, dtype=np.int64)
    chosen, total = set(), 0
    for k in edge_order(g).tolist():
        u, v = int(g.edges[k, 0]), int(g.edges[k, 1])
        if ds.merge(u, v):
            chosen.add((u, v))
            total += int(w[k])
    return chosen, total


def oracle_bfs(g: InputGraph, s: int) -> np.ndarray:
    """Hop distances from ``s``; ``UNREACHABLE`` (-1) where none."""
    dist = np.full(g.n, UNREACHABLE, dtype=np.int64)
    dist[s] = 0
    q = deque([s])
    while q:
        u = q.popleft()
        for v in g.neighbors(u).tolist():
            if dist[v] == UNREACHABLE:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def components(g: InputGraph) -> int:
    ds = DisjointSet(range(g.n))
    for u, v in g.edges.tolist():
        ds.merge(u, v)
    return ds.n_subsets


# -- arboricity ------------------------------------------------------------
def _arboricity_exhaustive(g: InputGraph) -> int:
    n = g.n
    if g.m == 0:
        return 0
    masks = np.arange(1, 1 << n, dtype=np.int64)
    size = np.zeros(len(masks), dtype=np.int64)
    for v in range(n):
        size += (masks >> v) & 1
    mh = np.zeros(len(masks), dtype=np.int64)
    for u, v in g.edges.tolist():
        mh += ((masks >> u) & 1) & ((masks >> v) & 1)
    ok = size >= 2
    return int(np.max(-(-mh[ok] // (size[ok] - 1))))


def _max_surplus_containing(g: InputGraph, k: int, x: int) -> int:
    """max over H ∋ x of m_H - k |H| via a min cut (edge-node construction)."""
    n, m = g.n, g.m
    s, t = n + m, n + m + 1
    big = m + k * n + 1
    eu, ev = g.edges[:, 0], g.edges[:, 1]
    e_nodes = n + np.arange(m)
    rows = np.concatenate([np.full(m, s), e_nodes, e_nodes, np.arange(n), [s]])
    cols = np.concatenate([e_nodes, eu, ev, np.full(n, t), [x]])
    caps = np.concatenate([np.ones(m), np.full(2 * m, big), np.full(n, k), [big]]).astype(np.int32)
    A = csr_matrix((caps, (rows, cols)), shape=(n + m + 2, n + m + 2))
    cut = maximum_flow(A, s, t).flow_value
    return m - cut


def _arboricity_flow(g: InputGraph) -> int:
    if g.m == 0:
        return 0
    lo, hi = 1, int(g.degree.max())
    # arboricity <= k  iff  m_H <= k (|H| - 1) for every H
    while lo < hi:
        k = (lo + hi) // 2
        if all(_max_surplus_containing(g, k, x) <= -k for x in range(g.n)):
            hi = k
        else:
            lo = k + 1
    return lo


def exact_arboricity(g: InputGraph, method: str = "auto") -> int:
    """Nash-Williams value ``max_H ceil(m_H / (n_H - 1))`` for ``n <= 64``."""
    if g.n > 64:
        raise ValueError(f"exact arboricity refused for n={g.n} > 64; use the construction bound")
    if method == "exhaustive" or (method == "auto" and g.n <= 16):
        if g.n > 16:
            raise ValueError("exhaustive arboricity needs n <= 16")
        return _arboricity_exhaustive(g)
    return _arboricity_flow(g)


# -- checkers --------------------------------------------------------------
def _edge_set(g: InputGraph, edges, rep: VerificationReport):
    out = []
    for e in edges:
        u, v = int(min(e)), int(max(e))
        if not (0 <= u < g.n and 0 <= v < g.n) or not g.has_edge(u, v):
            rep.diagnostics.append(f"({u},{v}) is not an edge of the graph")
            continue
        out.append((u, v))
    if len(set(out)) != len(out):
        rep.diagnostics.append("edge listed twice")
    return sorted(set(out))


def _check_mst(g, result, rep):
    edges = _edge_set(g, getattr(result, "edges", result), rep)
    ds = DisjointSet(range(g.n))
    for u, v in edges:
        if not ds.merge(u, v):
            rep.diagnostics.append(f"edge ({u},{v}) closes a cycle")
            return
    if ds.n_subsets != components(g):
        rep.diagnostics.append(f"forest has {ds.n_subsets} trees, graph has {components(g)} components")
    w = g.weights if g.weighted else np.ones(g.m, dtype=np.int64)
    idx = {(int(a), int(b)): k for k, (a, b) in enumerate(g.edges.tolist())}
    total = sum(int(w[idx[e]]) for e in edges)
    _, best = oracle_mst(g)
    if total != best:
        rep.diagnostics.append(f"weight {total} != oracle {best}")


def _check_bfs(g, result, rep):
    s = int(result.source)
    delta = np.asarray(result.delta, dtype=np.int64)
    pi = np.asarray(result.pi, dtype=np.int64)
    if delta.shape != (g.n,) or pi.shape != (g.n,):
        rep.diagnostics.append("result arrays have the wrong length")
        return
    ref = oracle_bfs(g, s)
    bad = np.flatnonzero(delta != ref)
    if len(bad):
        u = int(bad[0])
        rep.diagnostics.append(f"delta({u})={int(delta[u])}, oracle {int(ref[u])}")
    for u in range(g.n):
        if u == s or ref[u] == UNREACHABLE:
            if pi[u] != -1:
                rep.diagnostics.append(f"node {u} should have no predecessor")
            continue
        nb = g.neighbors(u)
        cand = nb[ref[nb] == ref[u] - 1]
        if pi[u] != cand.min():
            rep.diagnostics.append(f"pi({u})={int(pi[u])}, expected {int(cand.min())}")


def _check_mis(g, result, rep):
    S = np.zeros(g.n, dtype=bool)
    for u in getattr(result, "members", result):
        if not 0 <= int(u) < g.n:
            rep.diagnostics.append(f"node {u} out of range")
            return
        S[int(u)] = True
    both = S[g.edges[:, 0]] & S[g.edges[:, 1]]
    if both.any():
        u, v = g.edges[np.argmax(both)]
        rep.diagnostics.append(f"edge ({u},{v}) inside the set")
    covered = S.copy()
    covered[g.edges[:, 0][S[g.edges[:, 1]]]] = True
    covered[g.edges[:, 1][S[g.edges[:, 0]]]] = True
    if not covered.all():
        rep.diagnostics.append(f"node {int(np.argmin(covered))} is uncovered (not maximal)")


def _check_matching(g, result, rep):
    edges = _edge_set(g, getattr(result, "edges", result), rep)
    matched = np.zeros(g.n, dtype=np.int64)
    for u, v in edges:
        matched[u] += 1
        matched[v] += 1
    if np.any(matched > 1):
        rep.diagnostics.append(f"node {int(np.argmax(matched > 1))} matched twice")
    free = matched == 0
    both = free[g.edges[:, 0]] & free[g.edges[:, 1]]
    if both.any():
        u, v = g.edges[np.argmax(both)]
        rep.diagnostics.append(f"edge ({u},{v}) has two free endpoints (not maximal)")


def _check_coloring(g, result, rep):
    colors = np.asarray(getattr(result, "colors", result), dtype=np.int64)
    palette = getattr(result, "palette", None)
    if colors.shape != (g.n,):
        rep.diagnostics.append("color array has the wrong length")
        return
    if np.any(colors < 0):
        rep.diagnostics.append(f"node {int(np.argmax(colors < 0))} has no color")
    if palette is not None and np.any(colors >= palette):
        rep.diagnostics.append(f"node {int(np.argmax(colors >= palette))} uses a color >= {palette}")
    same = colors[g.edges[:, 0]] == colors[g.edges[:, 1]]
    if same.any():
        u, v = g.edges[np.argmax(same)]
        rep.diagnostics.append(f"edge ({u},{v}) is monochromatic")


def _check_orientation(g, result, rep, a_ref):
    head = np.asarray(result.head, dtype=np.int64)
    if head.shape != (g.m,):
        rep.diagnostics.append("head array has the wrong length")
        return
    ok = (head == g.edges[:, 0]) | (head == g.edges[:, 1])
    if not ok.all():
        u, v = g.edges[np.argmin(ok)]
        rep.diagnostics.append(f"edge ({u},{v}) is not directed exactly once")
    views = getattr(result, "views", None)
    if views is not None:
        views = np.asarray(views, dtype=np.int64)
        bad = (views[:, 0] != head) | (views[:, 1] != head)
        if bad.any():
            u, v = g.edges[np.argmax(bad)]
            rep.diagnostics.append(f"endpoints of ({u},{v}) disagree on its direction")
    tail = np.where(head == g.edges[:, 0], g.edges[:, 1], g.edges[:, 0])
    outdeg = np.bincount(tail, minlength=g.n) if g.m else np.zeros(g.n, np.int64)
    if a_ref is not None and g.m and outdeg.max() > 4 * a_ref:
        rep.diagnostics.append(f"node {int(np.argmax(outdeg))} has outdegree {int(outdeg.max())} > 4*{a_ref}")


def verify(kind: str, g: InputGraph, result, a_ref: int | None = None) -> VerificationReport:
    """Check ``result`` against the definitions; never raises on bad input."""
    rep = VerificationReport(kind)
    if kind not in KINDS:
        rep.diagnostics.append(f"unknown kind {kind!r}")
        return rep
    try:
        if kind == "mst":
            _check_mst(g, result, rep)
        elif kind == "bfs":
            _check_bfs(g, result, rep)
        elif kind == "mis":
            _check_mis(g, result, rep)
        elif kind == "matching":
            _check_matching(g, result, rep)
        elif kind == "coloring":
            _check_coloring(g, result, rep)
        else:
            if a_ref is None:
                a_ref = g.meta.get("a_construction")
            _check_orientation(g, result, rep, a_ref)
    except Exception as exc:  # malformed result
        rep.diagnostics.append(f"malformed result: {type(exc).__name__}: {exc}")
    return rep


def reference_arboricity(g: InputGraph) -> int:
    """Exact value when affordable, the construction bound otherwise."""
    if g.n <= 64:
        return exact_arboricity(g)
    if "a_construction" in g.meta:
        return int(g.meta["a_construction"])
    # degeneracy is an upper bound on arboricity
    import networkx as nx
    return max(1, max(nx.core_number(g.to_networkx()).values(), default=0))
