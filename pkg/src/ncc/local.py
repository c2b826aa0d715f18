"""Algorithms over broadcast trees: BFS, MIS, maximal matching, O(a)-coloring.

Broadcast trees are multicast trees for the groups ``A_u = N(u)``.  They are
built over an orientation: a tail joins its heads' groups and also injects the
packet that makes each head join its own group, so no node injects more than
``2 d_out`` packets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graphs import InputGraph
from .oracles import UNREACHABLE
from .orientation import MAX_MAX, Orientation
from .primitives.aggregate import MAX, MIN, SUM, lexmin
from .primitives.aggregation import bits_of, delivered_mask, post_direct, run_aggregation
from .primitives.multicast import (MulticastTreeSet, run_multi_aggregation, run_multicast,
                                   setup_multicast_trees, setup_multicast_trees_injected)
from .primitives.waves import aggregate_and_broadcast
from .sim import Simulation

EPSILON_DEFAULT = 1.0


class ColoringError(RuntimeError):
    """A node ran out of palette colors."""


def _count(sim, mask) -> int:
    """Number of nodes with ``mask`` set, known to all nodes afterwards."""
    out = aggregate_and_broadcast(sim, np.asarray(mask, dtype=np.int64)[:, None], SUM)
    return int(out[0]) if out else 0


def _phase_limit(n: int) -> int:
    return 16 * max(1, math.ceil(math.log2(max(n, 2)))) + 16


# -- broadcast trees -----------------------------------------------------------
def setup_broadcast_trees(sim: Simulation, g: InputGraph, orientation: Orientation,
                          label: str = "broadcast-trees") -> MulticastTreeSet:
    """Trees for ``A_u = N(u)`` with source ``u``, injected over the orientation."""
    start = sim.round
    tail, head = orientation.tail, orientation.head
    # tail joins A_head, and joins head into A_tail on its behalf
    injector = np.concatenate([tail, tail])
    member = np.concatenate([tail, head])
    group = np.concatenate([head, tail])
    trees = setup_multicast_trees_injected(sim, injector, member, group,
                                           {u: u for u in range(g.n)}, label=label)
    inj = np.bincount(injector, minlength=g.n) if len(injector) else np.zeros(g.n, np.int64)
    trees.stats["max_injected"] = int(inj.max()) if g.n else 0
    trees.stats["injected"] = inj
    trees.stats["setup_rounds"] = sim.round - start
    return trees


def neighbor_min(sim, trees, senders, values, width: int = 1, label: str = "neighbor-min"):
    """Every node learns the lexicographic minimum over its neighbors in ``senders``.

    Returns ``(values (n, width), has_value)``.
    """
    f = MIN if width == 1 else lexmin(width)
    vals = np.asarray(values, dtype=np.int64).reshape(len(senders), -1)
    payloads = {int(u): tuple(v) for u, v in zip(np.asarray(senders).tolist(), vals.tolist())}
    r = run_multi_aggregation(sim, trees, payloads, f, label=label)
    return r.values, r.has_value


# -- BFS -------------------------------------------------------------------------
@dataclass
class BfsResult:
    source: int
    delta: np.ndarray     # UNREACHABLE where no path exists
    pi: np.ndarray        # -1 for the source and unreachable nodes
    phases: int
    rounds: int
    stats: dict = field(default_factory=dict)

    def export_lines(self) -> list[str]:
        return [f"{u} {d} {p}" for u, (d, p) in enumerate(zip(self.delta.tolist(), self.pi.tolist()))]


def bfs_tree(sim: Simulation, g: InputGraph, trees: MulticastTreeSet, source: int) -> BfsResult:
    """Distances and min-id predecessors from ``source``, phase by phase."""
    start = sim.round
    n = g.n
    if not 0 <= source < n:
        raise ValueError(f"source {source} outside 0..{n - 1}")
    delta = np.full(n, UNREACHABLE, dtype=np.int64)
    pi = np.full(n, -1, dtype=np.int64)
    delta[source] = 0
    active = np.array([source], dtype=np.int64)
    phase = 0
    while True:
        phase += 1
        if phase > n + 1:
            raise RuntimeError("BFS did not terminate")
        vals, has = neighbor_min(sim, trees, active, active, label="bfs")
        new = has & (delta == UNREACHABLE)
        delta[new] = phase
        pi[new] = vals[new, 0]
        if _count(sim, new) == 0:
            break
        active = np.flatnonzero(new)
    res = BfsResult(int(source), delta, pi, phase, sim.round - start, dict(eccentricity=phase - 1))
    sim.record("bfs", start, phases=phase)
    return res


# -- MIS -------------------------------------------------------------------------
@dataclass
class MISResult:
    members: np.ndarray
    phases: int
    rounds: int
    stats: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.members.tolist())

    def export_lines(self) -> list[str]:
        return [str(u) for u in self.members.tolist()]


def compute_mis(sim: Simulation, g: InputGraph, trees: MulticastTreeSet) -> MISResult:
    """Random-priority MIS: a node joins when it beats every active neighbor."""
    start = sim.round
    n = g.n
    active = np.ones(n, dtype=bool)
    in_mis = np.zeros(n, dtype=bool)
    phase = 0
    while True:
        phase += 1
        if phase > _phase_limit(n):
            raise RuntimeError("MIS did not terminate")
        act = np.flatnonzero(active)
        r = sim.private("mis-r").bits63(act)
        # ties are broken by identifier through the (r, id) order
        vals, has = neighbor_min(sim, trees, act, np.stack([r, act], axis=1), width=2, label="mis-min")
        mine = np.zeros((n, 2), dtype=np.int64)
        mine[act, 0], mine[act, 1] = r, act
        beats = (mine[:, 0] < vals[:, 0]) | ((mine[:, 0] == vals[:, 0]) & (mine[:, 1] < vals[:, 1]))
        join = active & (~has | beats)
        in_mis |= join
        active &= ~join
        joined = np.flatnonzero(join)
        _, covered = neighbor_min(sim, trees, joined, np.ones(len(joined), np.int64), label="mis-cover")
        active &= ~covered
        if _count(sim, active) == 0:
            break
    res = MISResult(np.flatnonzero(in_mis), phase, sim.round - start)
    sim.record("mis", start, phases=phase)
    return res


# -- maximal matching ------------------------------------------------------------
@dataclass
class MatchingResult:
    edges: list
    phases: int
    rounds: int
    stats: dict = field(default_factory=dict)

    def export_lines(self) -> list[str]:
        return [f"{u} {v}" for u, v in self.edges]


def _direct(sim, src, dst, label):
    """One-round direct messages; returns the delivered mask."""
    t = sim.round
    src = np.asarray(src, dtype=np.int64)
    rounds, handle, local = post_direct(sim, src, dst, np.full(len(src), t), bits_of(np.arange(sim.n)), label)
    sim.net.advance_to(max(t + 1, int(rounds.max()) + 1 if len(rounds) else t + 1))
    return delivered_mask(len(src), handle, local)


def compute_matching(sim: Simulation, g: InputGraph, trees: MulticastTreeSet) -> MatchingResult:
    """Random proposals, one accepted per node, then a choice on paths and cycles."""
    start = sim.round
    n = g.n
    matched = np.zeros(n, dtype=bool)
    mate = np.full(n, -1, dtype=np.int64)
    phase = 0
    sizes = []
    while True:
        phase += 1
        if phase > _phase_limit(n):
            raise RuntimeError("matching did not terminate")
        U = np.flatnonzero(~matched)
        # 1. a uniformly random unmatched neighbor via annotated multi-aggregation
        r = run_multi_aggregation(sim, trees, {int(u): (int(u),) for u in U.tolist()}, lexmin(2),
                                  annotate=True, label="matching-propose")
        proposes = ~matched & r.has_value
        if _count(sim, proposes) == 0:
            break
        choice = np.full(n, -1, dtype=np.int64)
        choice[proposes] = r.values[proposes, 1]
        # 2. every chosen node accepts its minimum-id proposer
        pu = np.flatnonzero(proposes)
        agg = run_aggregation(sim, pu, choice[pu], pu[:, None], choice[pu], MIN, label="matching-accept")
        accepted = np.full(n, -1, dtype=np.int64)
        ok = agg.received
        accepted[agg.groups[ok]] = agg.values[ok, 0]
        # 3. the accepting node tells its proposer
        acc = np.flatnonzero(accepted >= 0)
        got = _direct(sim, acc, accepted[acc], "matching-ack")
        out_ok = np.zeros(n, dtype=bool)
        out_ok[accepted[acc][got]] = True
        # path/cycle neighbors: accepted outgoing choice and accepted proposer
        a = np.where(out_ok, choice, -1)
        b = accepted
        two = (a >= 0) & (b >= 0) & (a != b)
        coin = sim.private("matching-pick").bit(np.arange(n))
        pick = np.where(two, np.where(coin == 1, a, b), np.where(a >= 0, a, b))
        chooser = np.flatnonzero(pick >= 0)
        got = _direct(sim, chooser, pick[chooser], "matching-pick")
        picked_by = np.full(n, -1, dtype=np.int64)
        # at most two messages per receiver; a mutual pick is what matters
        for u, v in zip(chooser[got].tolist(), pick[chooser][got].tolist()):
            if pick[v] == u:
                picked_by[v] = u
        new = np.flatnonzero(picked_by >= 0)
        mate[new] = picked_by[new]
        matched[new] = True
        sizes.append(len(new) // 2)
    edges = sorted({(int(min(u, v)), int(max(u, v))) for u, v in enumerate(mate.tolist()) if v >= 0})
    res = MatchingResult(edges, phase, sim.round - start, dict(matched_per_phase=sizes))
    sim.record("matching", start, phases=phase)
    return res


# -- coloring --------------------------------------------------------------------
@dataclass
class ColoringResult:
    colors: np.ndarray
    palette: int
    a_hat: int
    epsilon: float
    phases: int
    repetitions: list
    rounds: int
    stats: dict = field(default_factory=dict)

    @property
    def num_colors(self) -> int:
        return len(np.unique(self.colors[self.colors >= 0]))

    def export_lines(self) -> list[str]:
        return [f"{u} {c}" for u, c in enumerate(self.colors.tolist())]


def palette_size(a_hat: int, epsilon: float) -> int:
    """Colors ``0..k-1`` with ``k = ceil(2 (1 + eps) a_hat)``; ``a_hat`` at least 1."""
    return max(1, math.ceil(2 * (1 + epsilon) * max(a_hat, 1) - 1e-9))


def compute_coloring(sim: Simulation, g: InputGraph, orientation: Orientation,
                     epsilon: float = EPSILON_DEFAULT) -> ColoringResult:
    """Color level by level from the top, with random tentative choices."""
    start = sim.round
    n = g.n
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    lvl = orientation.level
    tail, head = orientation.tail, orientation.head
    same = lvl[tail] == lvl[head]
    d_L = np.bincount(np.concatenate([tail[same], head[same]]), minlength=n) if g.m else np.zeros(n, np.int64)
    d_out = orientation.outdeg
    a_hat, T = (int(x) for x in aggregate_and_broadcast(
        sim, np.stack([np.maximum(d_L, d_out), lvl], axis=1), MAX_MAX))
    k = palette_size(a_hat, epsilon)
    if k >= 2 ** 31:
        raise ValueError("palette too large")
    # tails join their heads' groups: A_u = N_in(u)
    in_trees = setup_multicast_trees(sim, tail, head, {u: u for u in range(n)}, label="coloring-trees")
    palette = np.ones((n, k), dtype=bool)
    color = np.full(n, -1, dtype=np.int64)
    reps = []
    min_start = []
    rep_limit = _phase_limit(n)
    for level in range(T, 0, -1):
        here = lvl == level
        todo = here & (color < 0)
        if here.any():
            min_start.append(int(palette[here].sum(axis=1).min()))
        count = 0
        while _count(sim, todo) > 0:
            count += 1
            if count > rep_limit:
                raise ColoringError(f"level {level} not colored after {rep_limit} repetitions")
            U = np.flatnonzero(todo)
            sizes = palette[U].sum(axis=1)
            if np.any(sizes == 0):
                raise ColoringError(f"node {int(U[np.argmax(sizes == 0)])} has an empty palette")
            # tentative draw, the j-th free color
            j = sim.private("coloring-draw").uniform(sizes, U)
            cum = np.cumsum(palette[U], axis=1)
            c = np.argmax(cum > j[:, None], axis=1).astype(np.int64)
            tent = np.full(n, -1, dtype=np.int64)
            tent[U] = c
            mc = run_multicast(sim, in_trees, {int(u): int(x) for u, x in zip(U.tolist(), c.tolist())},
                               ell_hat=max(a_hat, 1), label="coloring-tentative")
            d = mc.delivered
            lm, lc = mc.member[d], mc.payload[d, 0]
            clash = np.zeros(n, dtype=bool)
            hit = lc == tent[lm]
            clash[lm[hit]] = True
            keep = U[~clash[U]]
            color[keep] = tent[keep]
            # permanent choice: in-neighbors via multicast, out-neighbors via aggregation
            mc = run_multicast(sim, in_trees, {int(u): int(color[u]) for u in keep.tolist()},
                               ell_hat=max(a_hat, 1), label="coloring-final")
            d = mc.delivered
            palette[mc.member[d], mc.payload[d, 0]] = False
            sel = np.isin(tail, keep)
            mem, tgt = tail[sel], head[sel]
            agg = run_aggregation(sim, mem, tgt * k + color[mem], np.ones((len(mem), 1), np.int64), tgt, MAX,
                                  ell2_hat=k, label="coloring-notify")
            ok = agg.received
            palette[agg.targets[ok], agg.groups[ok] % k] = False
            todo = here & (color < 0)
        reps.append(count)
    res = ColoringResult(color, k, a_hat, float(epsilon), T, reps, sim.round - start,
                         dict(min_palette_at_start=min(min_start) if min_start else k,
                              tree_congestion=in_trees.congestion))
    sim.record("coloring", start, phases=T, palette=k)
    return res
