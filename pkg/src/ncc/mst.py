"""Boruvka MST with Heads/Tails clustering and parity-sketch FindMin."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graphs import InputGraph
from .primitives.aggregate import SUM_SUM, XOR_XOR
from .primitives.aggregation import bits_of, delivered_mask, post_direct, run_aggregation
from .primitives.multicast import run_multicast, setup_multicast_trees
from .primitives.waves import aggregate_and_broadcast, distribute_shared_randomness
from .sim import Simulation

MIN_REPS = 48
MAX_REPS = 62


def edge_keys(g: InputGraph) -> np.ndarray:
    """Composite key ``(w - 1) n^2 + min n + max`` ordering edges by (weight, id)."""
    w = g.weights if g.weighted else np.ones(g.m, dtype=np.int64)
    return (w - 1) * (g.n * g.n) + g.edges[:, 0] * g.n + g.edges[:, 1]


def decode_key(key: int, n: int) -> tuple[int, int, int]:
    """``(u, v, weight)`` of a composite key."""
    w, rest = divmod(int(key), n * n)
    return rest // n, rest % n, w + 1


def repetitions(n: int) -> int:
    return min(MAX_REPS, max(MIN_REPS, 2 * math.ceil(math.log2(max(n, 2)))))


def edge_parity_sketch(g: InputGraph, u: int, a: int, b: int, h, keys=None) -> tuple[int, int]:
    """``(h_up(u), h_down(u))``: parities of ``h(id(u,v))`` and ``h(id(v,u))``
    over incident edges with composite key in ``[a, b]``."""
    keys = edge_keys(g) if keys is None else keys
    nb = g.neighbors(u)
    k = keys[g.adj_edge[g.indptr[u]:g.indptr[u + 1]]]
    sel = nb[(k >= a) & (k <= b)]
    n = g.n
    up = int(np.bitwise_xor.reduce(h.bit(u * n + sel))) if len(sel) else 0
    down = int(np.bitwise_xor.reduce(h.bit(sel * n + u))) if len(sel) else 0
    return up, down


def slot_words(g: InputGraph, hashes) -> tuple[np.ndarray, np.ndarray]:
    """Per adjacency slot (u, v): packed bits ``h_j(id(u,v))`` and ``h_j(id(v,u))``."""
    n = g.n
    fwd = g.adj_src * n + g.indices
    bwd = g.indices * n + g.adj_src
    up = np.zeros(len(fwd), dtype=np.int64)
    down = np.zeros(len(fwd), dtype=np.int64)
    for j, h in enumerate(hashes):
        up |= h.bit(fwd) << j
        down |= h.bit(bwd) << j
    return up, down


def node_words(g: InputGraph, slot_up, slot_down, slot_key, lo, hi) -> tuple[np.ndarray, np.ndarray]:
    """Every node's packed (h_up, h_down) for its own range ``[lo[u], hi[u]]``."""
    src = g.adj_src
    inr = (slot_key >= lo[src]) & (slot_key <= hi[src])
    up = np.zeros(g.n, dtype=np.int64)
    down = np.zeros(g.n, dtype=np.int64)
    np.bitwise_xor.at(up, src[inr], slot_up[inr])
    np.bitwise_xor.at(down, src[inr], slot_down[inr])
    return up, down


@dataclass
class Components:
    leader: np.ndarray   # the leader every node believes in
    trees: object = None

    def leaders(self) -> np.ndarray:
        return np.unique(self.leader)


def _probe(sim, g, comp, slot_up, slot_down, slot_key, lo, hi, label):
    """Leaders multicast ``[lo, hi]``; members reply with XOR sketches.

    ``lo``/``hi`` are indexed by leader.  Returns, per leader, whether the
    sketches reveal an outgoing edge in range.
    """
    n = g.n
    leaders = comp.leaders()
    payload = {int(l): (int(lo[l]), int(hi[l])) for l in leaders.tolist()}
    mc = run_multicast(sim, comp.trees, payload, ell_hat=1, label=label + "-range")
    # every node evaluates its sketch on the range it received (leaders: their own)
    my_lo = np.full(n, 1, dtype=np.int64)
    my_hi = np.zeros(n, dtype=np.int64)
    my_lo[leaders], my_hi[leaders] = lo[leaders], hi[leaders]
    ok = mc.delivered
    my_lo[mc.member[ok]] = mc.payload[ok, 0]
    my_hi[mc.member[ok]] = mc.payload[ok, 1]
    up, down = node_words(g, slot_up, slot_down, slot_key, my_lo, my_hi)
    members = np.flatnonzero(comp.leader != np.arange(n))
    agg = run_aggregation(sim, members, comp.leader[members], np.stack([up[members], down[members]], axis=1),
                          comp.leader[members], XOR_XOR, ell2_hat=1, label=label + "-sketch")
    tot_up, tot_down = up.copy(), down.copy()
    r = agg.received
    tot_up[agg.groups[r]] ^= agg.values[r, 0]
    tot_down[agg.groups[r]] ^= agg.values[r, 1]
    return tot_up != tot_down


def find_lightest_edge(sim: Simulation, g: InputGraph, comp: Components, hashes, keys=None,
                       label: str = "findmin") -> np.ndarray:
    """Per node ``l``: composite key of the lightest edge leaving the
    component led by ``l`` (``-1`` if none or ``l`` is no leader)."""
    n = g.n
    keys = edge_keys(g) if keys is None else keys
    slot_key = keys[g.adj_edge]
    slot_up, slot_down = slot_words(g, hashes)
    W = int(g.meta.get("W", int(keys.max() // (n * n) + 1) if g.m else 1))
    top = W * n * n - 1
    leaders = comp.leaders()
    lo = np.zeros(n, dtype=np.int64)
    hi = np.full(n, top, dtype=np.int64)
    has = np.zeros(n, dtype=bool)
    has[leaders] = _probe(sim, g, comp, slot_up, slot_down, slot_key, lo, hi, label)[leaders]
    steps = max(1, math.ceil(math.log2(top + 1)))
    for _ in range(steps):
        mid = (lo + hi) // 2
        yes = _probe(sim, g, comp, slot_up, slot_down, slot_key, lo, mid, label)
        hi = np.where(yes, mid, hi)
        lo = np.where(yes, lo, np.minimum(mid + 1, hi))
    out = np.full(n, -1, dtype=np.int64)
    out[leaders] = np.where(has[leaders], lo[leaders], -1)
    return out


def _rebuild(sim, comp: Components, label: str):
    n = len(comp.leader)
    members = np.flatnonzero(comp.leader != np.arange(n))
    leaders = comp.leaders()
    comp.trees = setup_multicast_trees(sim, members, comp.leader[members],
                                       {int(l): int(l) for l in leaders.tolist()}, label=label)


@dataclass
class MSTResult:
    edges: list
    weight: int
    components: int
    phases: int
    rounds: int
    known_by: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    def export_lines(self, g: InputGraph) -> list[str]:
        w = dict(zip(map(tuple, g.edges.tolist()), (g.weights if g.weighted else np.ones(g.m, np.int64)).tolist()))
        return [f"{u} {v} {w[(u, v)]}" for u, v in sorted(self.edges)]


def compute_mst(sim: Simulation, g: InputGraph, reps: int | None = None, max_phases: int | None = None) -> MSTResult:
    """Minimum spanning forest; each chosen edge is known to its Tails endpoint."""
    start = sim.round
    n = g.n
    keys = edge_keys(g)
    if len(keys) and keys.max() >= 2 ** 62:
        raise ValueError("weights too large for composite keys")
    reps = reps or repetitions(n)
    comp = Components(np.arange(n, dtype=np.int64))
    _rebuild(sim, comp, "mst-trees")
    chosen: dict[tuple[int, int], int] = {}
    phase = 0
    limit = max_phases or (8 * math.ceil(math.log2(max(n, 2))) + 16)
    history = []
    ncomp = n
    while True:
        phase += 1
        if phase > limit:
            raise RuntimeError(f"no convergence after {limit} phases")
        leaders = comp.leaders()
        # 1. coins
        coin = np.zeros(n, dtype=np.int64)
        coin[leaders] = sim.private("mst-coin").bit(leaders)
        mc = run_multicast(sim, comp.trees, {int(l): int(coin[l]) for l in leaders.tolist()}, ell_hat=1,
                           label="mst-coin")
        my_coin = coin.copy()
        my_coin[mc.member[mc.delivered]] = mc.payload[mc.delivered, 0]
        # 2. lightest outgoing edge per component (fresh hashes every phase)
        distribute_shared_randomness(sim, reps)
        hashes = [sim.hash(f"mst-sketch-{j}") for j in range(reps)]
        best = find_lightest_edge(sim, g, comp, hashes, keys, label="mst-findmin")
        # 3. termination check
        has_edge = np.zeros(n, dtype=np.int64)
        has_edge[leaders] = best[leaders] >= 0
        is_leader = np.zeros(n, dtype=np.int64)
        is_leader[leaders] = 1
        active, ncomp = aggregate_and_broadcast(sim, np.stack([has_edge, is_leader], axis=1), SUM_SUM)
        history.append(int(ncomp))
        if active == 0:
            break
        # 4. leaders announce the edge
        la = leaders[best[leaders] >= 0]
        mc = run_multicast(sim, comp.trees, {int(l): int(best[l]) for l in la.tolist()}, ell_hat=1,
                           label="mst-edge")
        my_best = np.full(n, -1, dtype=np.int64)
        my_best[la] = best[la]
        my_best[mc.member[mc.delivered]] = mc.payload[mc.delivered, 0]
        # the endpoint inside the component is u, the other one v
        ku = my_best >= 0
        eu = np.where(ku, (my_best % (n * n)) // n, -1)
        ev = np.where(ku, my_best % n, -1)
        nodes = np.arange(n)
        is_u = ku & ((eu == nodes) | (ev == nodes))
        other = np.where(eu == nodes, ev, eu)
        tails_u = np.flatnonzero(is_u & (my_coin == 0))
        # 5. u joins A_id(v) and learns (coin, leader) of v's component
        tv = other[tails_u]
        jt = setup_multicast_trees(sim, tails_u, tv, {int(v): int(v) for v in range(n)}, label="mst-join-trees")
        mc = run_multicast(sim, jt, {int(v): (int(my_coin[v]), int(comp.leader[v])) for v in range(n)},
                           ell_hat=1, label="mst-join")
        got = mc.delivered
        ju, jcoin, jlead = mc.member[got], mc.payload[got, 0], mc.payload[got, 1]
        heads = jcoin == 1
        ju, jlead = ju[heads], jlead[heads]
        # 6. u tells its leader the new leader
        t6 = sim.round
        rounds, handle, local = post_direct(sim, ju, comp.leader[ju], np.full(len(ju), t6),
                                            bits_of(np.arange(n)), "mst-report")
        sim.net.advance_to(t6 + 1)
        ok = delivered_mask(len(ju), handle, local)
        for u, l in zip(ju.tolist(), jlead.tolist()):
            v = int(other[u])
            chosen[(min(u, v), max(u, v))] = u
        new_leader = comp.leader.copy()
        new_of = {}
        for u, l in zip(ju[ok].tolist(), jlead[ok].tolist()):
            new_of[int(comp.leader[u])] = int(l)
        # 7. merging leaders inform their components
        mc = run_multicast(sim, comp.trees, new_of, ell_hat=1, label="mst-merge")
        for l, nl in new_of.items():
            new_leader[l] = nl
        d = mc.delivered
        new_leader[mc.member[d]] = mc.payload[d, 0]
        comp = Components(new_leader)
        # 8. rebuild the component trees
        _rebuild(sim, comp, "mst-trees")
    w = g.weights if g.weighted else np.ones(g.m, dtype=np.int64)
    idx = {e: k for k, e in enumerate(map(tuple, g.edges.tolist()))}
    total = int(sum(int(w[idx[e]]) for e in chosen))
    res = MSTResult(sorted(chosen), total, int(ncomp), phase, sim.round - start, dict(chosen),
                    dict(components=history, reps=reps))
    sim.record("mst", start, phases=phase)
    return res
