"""Multicast trees, Multicast and Multi-Aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .aggregate import EMPTY, AggregateFunction, ConfigurationError, as_records, value_bits
from .aggregation import (barrier_after, bits_of, combining_phase, completion_times,
                          delivered_mask, post_direct, preprocess, rank_range, rank_within)
from .kernels import combine_route, spread_route
from .waves import post_wave


@dataclass
class MulticastTreeSet:
    """Trees recorded during setup, one per group.

    Tree node ``i`` is the copy of group ``tn_grp[i]`` at BF index ``tn_x[i]``
    (``level * P + column``); its children are
    ``task_child[task_start[i]:task_start[i+1]]``.  Leaf entries are
    ``(leaf_grp, leaf_member, leaf_col)``; ``leaf_tn`` is their tree node.
    """

    n: int
    d: int
    P: int
    groups: np.ndarray          # group ids, ascending
    sources: np.ndarray         # source node per group (-1 if none)
    root_col: np.ndarray        # h(i), level-d column per group
    root_tn: np.ndarray         # tree node of the root (-1 if the tree is empty)
    tn_x: np.ndarray
    tn_grp: np.ndarray
    task_start: np.ndarray
    task_child: np.ndarray
    task_cross: np.ndarray
    leaf_grp: np.ndarray
    leaf_member: np.ndarray
    leaf_col: np.ndarray
    leaf_tn: np.ndarray
    K: int
    L: int
    rounds: int
    stats: dict = field(default_factory=dict)

    @property
    def congestion(self) -> int:
        """Maximum number of trees sharing one BF node."""
        if len(self.tn_x) == 0:
            return 0
        return int(np.bincount(self.tn_x).max())

    @property
    def num_groups(self) -> int:
        return len(self.groups)

    def group_index(self, gids) -> np.ndarray:
        gids = np.asarray(gids, dtype=np.int64)
        idx = np.searchsorted(self.groups, gids)
        ok = (idx < len(self.groups)) & (self.groups[np.minimum(idx, len(self.groups) - 1)] == gids) \
            if len(self.groups) else np.zeros(len(gids), bool)
        if not np.all(ok):
            raise ConfigurationError(f"no tree for groups {gids[~ok][:5].tolist()}")
        return idx

    def members_of(self, gid: int) -> np.ndarray:
        g = self.group_index([gid])[0]
        return np.unique(self.leaf_member[self.leaf_grp == g])

    def tree_edges(self, gid: int) -> list[tuple[tuple[int, int], tuple[int, int]]]:
        """``((level, col), (level, col))`` parent-child BF edges of one tree."""
        g = self.group_index([gid])[0]
        out = []
        for i in np.flatnonzero(self.tn_grp == g):
            for j in range(self.task_start[i], self.task_start[i + 1]):
                ch = self.task_child[j]
                a, b = divmod(int(self.tn_x[i]), self.P)
                c, e = divmod(int(self.tn_x[ch]), self.P)
                out.append(((a, b), (c, e)))
        return out


def _build_trees(sim, G, moves, leaf_col, leaf_grp, roots_present, h):
    """Turn recorded moves into per-group trees (CSR over tree nodes)."""
    d, P = sim.d, sim.P
    Gm = max(G, 1)
    leaf_key = leaf_col * Gm + leaf_grp
    par_key = ((moves[:, 4] + 1) * P + moves[:, 2]) * Gm + moves[:, 3]
    ch_key = (moves[:, 4] * P + moves[:, 1]) * Gm + moves[:, 3]
    rg = np.flatnonzero(roots_present)
    root_key = (d * P + h[rg]) * Gm + rg
    keys = np.unique(np.concatenate([leaf_key, par_key, ch_key, root_key]))
    tn_x = keys // Gm
    tn_grp = keys % Gm
    pi = np.searchsorted(keys, par_key)
    ci = np.searchsorted(keys, ch_key)
    pairs = np.unique(np.stack([pi, ci], axis=1), axis=0) if len(pi) else np.zeros((0, 2), np.int64)
    task_child = pairs[:, 1].astype(np.int64)
    task_start = np.zeros(len(keys) + 1, dtype=np.int64)
    if len(pairs):
        np.add.at(task_start, pairs[:, 0] + 1, 1)
    task_start = np.cumsum(task_start)
    # a child one level down in a different column is across a cross edge
    task_cross = ((tn_x[pairs[:, 0]] % P) != (tn_x[task_child] % P)).astype(np.int64) if len(pairs) \
        else np.zeros(0, np.int64)
    root_tn = np.full(G, -1, dtype=np.int64)
    root_tn[rg] = np.searchsorted(keys, root_key)
    leaf_tn = np.searchsorted(keys, leaf_key)
    return tn_x, tn_grp, task_start, task_child, task_cross, root_tn, leaf_tn


def setup_multicast_trees(sim, member, group, source=None, label: str = "tree-setup") -> MulticastTreeSet:
    """Build one tree per group from the members' injected packets.

    ``member[k]`` belongs to group ``group[k]``.  ``source`` maps group id to
    its source node (each node is source of at most one group).  ``injector``
    style setups, where a third node injects on a member's behalf, pass the
    injecting node via :func:`setup_multicast_trees_injected`.
    """
    return setup_multicast_trees_injected(sim, member, member, group, source, label)


def setup_multicast_trees_injected(sim, injector, member, group, source=None,
                                   label: str = "tree-setup") -> MulticastTreeSet:
    start = sim.round
    n, d, P = sim.n, sim.d, sim.P
    injector = np.asarray(injector, dtype=np.int64)
    member = np.asarray(member, dtype=np.int64)
    group = np.asarray(group, dtype=np.int64)
    src_map = dict(source or {})
    if src_map:
        srcs = np.fromiter(src_map.values(), dtype=np.int64, count=len(src_map))
        if len(np.unique(srcs)) != len(srcs):
            _, cnt = np.unique(srcs, return_counts=True)
            raise ConfigurationError(f"node {int(np.unique(srcs)[cnt > 1][0])} is the source of two groups")
    all_g = np.unique(np.concatenate([group, np.fromiter(src_map.keys(), dtype=np.int64, count=len(src_map))]))
    G = len(all_g)
    gidx = np.searchsorted(all_g, group)
    k = len(member)
    if k:
        pair = np.unique(member * max(G, 1) + gidx)
        if len(pair) != k:
            raise ConfigurationError("a node joins the same group twice")
    sources = np.full(G, -1, dtype=np.int64)
    for g, s in src_map.items():
        sources[np.searchsorted(all_g, g)] = s
    bits = bits_of(all_g) + bits_of(np.arange(n))
    sim.net.check_bits(bits, label)

    col, handle, local, done = preprocess(sim, injector, group, bits, label)
    s1 = post_wave(sim, done, bits=max(1, bits_of([max(k, 1)])), label=label + "-barrier")
    sim.net.advance_to(s1)
    ok = delivered_mask(k, handle, local)
    K = rank_range(k, n)
    rank = sim.hash(label + "-rank").uniform(K, all_g)
    h = sim.hash(label + "-h").uniform(P, all_g)
    gkey = rank * max(G, 1) + np.arange(G)
    sel = np.flatnonzero(ok)
    ready, moves, self_delays = combining_phase(sim, col[sel], gidx[sel], gkey, h, bits, label, record=True)
    barrier_after(sim, ready, label=label + "-barrier")

    roots_present = np.zeros(G, dtype=bool)
    roots_present[gidx[sel]] = True
    lc, lg = col[sel], gidx[sel]
    tn_x, tn_grp, task_start, task_child, task_cross, root_tn, leaf_tn = _build_trees(
        sim, G, moves, lc, lg, roots_present, h)
    ts = MulticastTreeSet(n, d, P, all_g, sources, h, root_tn, tn_x, tn_grp, task_start, task_child,
                          task_cross, lg, member[sel], lc, leaf_tn, K, k, sim.round - start)
    ts.stats = dict(L=k, congestion=ts.congestion, K=K, self_delays=self_delays,
                    lost_packets=int(k - len(sel)), groups=G)
    sim.record(label, start, **ts.stats)
    return ts


def _spread(sim, trees: MulticastTreeSet, have_payload: np.ndarray, bits: int, label: str):
    """Spreading from the roots; returns (reached-leaf mask, level-0 token times)."""
    d, P = sim.d, sim.P
    start = sim.round
    G = trees.num_groups
    rank = sim.hash(label + "-rank").uniform(trees.K, trees.groups) if G else np.zeros(0, np.int64)
    gkey = rank * max(G, 1) + np.arange(G)
    if d == 0:
        arrival = np.full(len(trees.tn_x), -1, dtype=np.int64)
        arrival[trees.root_tn[have_payload]] = 0
        return arrival[trees.leaf_tn] >= 0, np.full(P, start, dtype=np.int64)
    starts = trees.root_tn[have_payload]
    arrival, moves, lastdep = spread_route(d, P, trees.tn_x, trees.tn_grp, gkey, trees.task_start,
                                           trees.task_child, trees.task_cross, starts.astype(np.int64))
    if len(moves):
        sim.net.post(start + moves[:, 0], moves[:, 1], moves[:, 2], bits=bits, order=moves[:, 3],
                     control=True, label=label + "-butterfly")
    lastdep = lastdep.reshape(d + 1, P)
    cols = np.arange(P)
    t = np.zeros(P, dtype=np.int64)
    tok_r, tok_s, tok_d = [], [], []
    # tokens travel from level d down to level 0
    for l in range(d, 0, -1):
        tau = np.maximum(t, lastdep[l] + 1)
        partner = cols ^ (1 << (l - 1))
        tok_r.append(start + tau)
        tok_s.append(cols)
        tok_d.append(partner)
        t = np.maximum(tau, tau[partner]) + 1
    sim.net.post(np.concatenate(tok_r), np.concatenate(tok_s), np.concatenate(tok_d),
                 bits=1, control=True, label=label + "-token")
    return arrival[trees.leaf_tn] >= 0, start + t


def _source_to_root(sim, trees, src_groups, bits, label):
    """Sources hand their payload to the tree roots (one round)."""
    gi = trees.group_index(src_groups) if len(src_groups) else np.zeros(0, np.int64)
    if len(gi) and np.any(trees.sources[gi] < 0):
        raise ConfigurationError("payload for a group without a source")
    start = sim.round
    srcs = trees.sources[gi]
    dst = trees.root_col[gi]
    rounds, handle, local = post_direct(sim, srcs, dst, np.full(len(gi), start), bits, label + "-root",
                                        control=False)
    sim.net.advance_to(start + 1)
    ok = delivered_mask(len(gi), handle, local)
    have = np.zeros(trees.num_groups, dtype=bool)
    have[gi[ok]] = True
    have &= trees.root_tn >= 0
    return gi, have


@dataclass
class MulticastResult:
    member: np.ndarray
    group: np.ndarray
    payload: np.ndarray
    delivered: np.ndarray
    rounds: int
    stats: dict = field(default_factory=dict)

    def received_by(self, node: int) -> dict:
        m = (self.member == node) & self.delivered
        return {int(g): tuple(int(v) for v in p) for g, p in zip(self.group[m], self.payload[m])}


def run_multicast(sim, trees: MulticastTreeSet, payloads: dict, ell_hat: int | None = None,
                  label: str = "multicast") -> MulticastResult:
    """Every member of group ``g`` receives ``payloads[g]`` from its source."""
    start = sim.round
    n = sim.n
    src_groups = np.fromiter(payloads.keys(), dtype=np.int64, count=len(payloads))
    vals = np.zeros((trees.num_groups, 1), dtype=np.int64)
    if len(payloads):
        rows = as_records([np.atleast_1d(v) for v in payloads.values()], len(np.atleast_1d(next(iter(payloads.values())))))
        vals = np.zeros((trees.num_groups, rows.shape[1]), dtype=np.int64)
    bits = bits_of(trees.groups) + (value_bits(rows) if len(payloads) else 0)
    sim.net.check_bits(bits, label)
    gi, have = _source_to_root(sim, trees, src_groups, bits, label)
    if len(payloads):
        vals[gi] = rows
    reached, t0 = _spread(sim, trees, have, bits, label)
    # leaf delivery within a random round of ceil(ell_hat / log n)
    if ell_hat is None:
        ell_hat = int(np.bincount(trees.leaf_member, minlength=n).max()) if len(trees.leaf_member) else 1
    window = max(1, math.ceil(ell_hat / sim.log_n))
    e = np.flatnonzero(reached)
    lc = trees.leaf_col[e]
    desired = t0[lc] + sim.private(label + "-leaf").uniform(window, lc, e)
    rounds, handle, local = post_direct(sim, lc, trees.leaf_member[e], desired, bits, label + "-leaf",
                                        order=trees.groups[trees.leaf_grp[e]])
    done = completion_times(n, lc, rounds, sim.round)
    done[: sim.P] = np.maximum(done[: sim.P], t0)
    s = post_wave(sim, done, bits=1, label=label + "-barrier")
    sim.net.advance_to(s)
    delivered = np.zeros(len(trees.leaf_member), dtype=bool)
    delivered[e] = delivered_mask(len(e), handle, local)
    stats = dict(L=len(trees.leaf_member), ell2_hat=int(ell_hat), congestion=trees.congestion)
    sim.record(label, start, **stats)
    return MulticastResult(trees.leaf_member, trees.groups[trees.leaf_grp], vals[trees.leaf_grp],
                           delivered, sim.round - start, stats)


@dataclass
class MultiAggregationResult:
    values: np.ndarray      # (n, w); rows of nodes without inputs are zero
    has_value: np.ndarray   # (n,) bool
    rounds: int
    stats: dict = field(default_factory=dict)

    def value(self, u: int):
        return tuple(int(v) for v in self.values[u]) if self.has_value[u] else EMPTY


def run_multi_aggregation(sim, trees: MulticastTreeSet, payloads: dict, f: AggregateFunction,
                          annotate: bool = False, label: str = "multi-aggregation") -> MultiAggregationResult:
    """Node ``u`` learns ``f`` over the payloads of all groups it belongs to.

    With ``annotate`` every leaf prefixes a private uniform 62-bit value to the
    payload, so a lexicographic-min ``f`` picks a uniformly random group.
    """
    start = sim.round
    n = sim.n
    src_groups = np.fromiter(payloads.keys(), dtype=np.int64, count=len(payloads))
    width = f.width - (1 if annotate else 0)
    rows = as_records([np.atleast_1d(v) for v in payloads.values()], width) if len(payloads) \
        else np.zeros((0, width), np.int64)
    vals = np.zeros((trees.num_groups, width), dtype=np.int64)
    bits = bits_of(trees.groups) + (value_bits(rows) if len(payloads) else 0) + (62 if annotate else 0)
    sim.net.check_bits(bits_of(np.arange(n)) + bits, label)
    gi, have = _source_to_root(sim, trees, src_groups, bits, label)
    if len(payloads):
        vals[gi] = rows
    reached, t0 = _spread(sim, trees, have, bits, label)

    # leaves map p_i to (id(u), p_i) and combine locally per (column, u)
    e = np.flatnonzero(reached)
    lc = trees.leaf_col[e]
    lm = trees.leaf_member[e]
    pv = vals[trees.leaf_grp[e]]
    if annotate:
        r = sim.private(label + "-annotate").bits63(lc, trees.groups[trees.leaf_grp[e]], lm) >> 1
        pv = np.concatenate([r[:, None], pv], axis=1)
    key = lc * n + lm
    ukey, packed = f.reduce(pv, key)
    pc = ukey // n
    pu = ukey % n
    # redistribution: one packet per round to a random level-0 column
    pos = rank_within(pc)
    dst = sim.private(label + "-redistribute").uniform(sim.P, pc, pos)
    desired = t0[pc] + pos
    rounds, handle, local = post_direct(sim, pc, dst, desired, bits, label + "-redistribute", order=pu)
    done = completion_times(n, pc, rounds, sim.round)
    done[: sim.P] = np.maximum(done[: sim.P], t0)
    L = len(pu)
    s1 = post_wave(sim, done, bits=max(1, bits_of([max(L, 1)])), label=label + "-barrier")
    sim.net.advance_to(s1)
    ok = delivered_mask(L, handle, local)

    # aggregation towards u through a fresh intermediate target h'(u)
    sel = np.flatnonzero(ok)
    ug = np.unique(pu[sel])
    G = len(ug)
    gidx = np.searchsorted(ug, pu[sel])
    K = rank_range(L, n)
    rank = sim.hash(label + "-rank2").uniform(K, ug)
    h = sim.hash(label + "-h2").uniform(sim.P, ug)
    gkey = rank * max(G, 1) + np.arange(G)
    ready, moves, _ = combining_phase(sim, dst[sel], gidx, gkey, h, bits, label)
    barrier_after(sim, ready, label=label + "-barrier")
    _, red = f.reduce(packed[sel], gidx)
    t_post = sim.round
    rounds2, handle2, local2 = post_direct(sim, h, ug, np.full(G, t_post), bits, label + "-post", order=ug)
    done2 = completion_times(n, h[~local2], rounds2[~local2], t_post)
    s3 = post_wave(sim, done2, bits=1, label=label + "-barrier")
    sim.net.advance_to(s3)
    got = delivered_mask(G, handle2, local2)
    out = np.zeros((n, f.width), dtype=np.int64)
    has = np.zeros(n, dtype=bool)
    out[ug[got]] = red[got]
    has[ug[got]] = True
    stats = dict(L=L, congestion=trees.congestion, K=K)
    sim.record(label, start, **stats)
    return MultiAggregationResult(out, has, sim.round - start, stats)
