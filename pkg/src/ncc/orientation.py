"""O(a)-orientation by repeated peeling of low-degree nodes.

Every phase has three stages: active nodes are determined from their
remaining degree, active nodes identify their inactive neighbors with
XOR trials, and active-active edges meet at a hashed rendezvous node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graphs import InputGraph
from .primitives.aggregate import MAX, SUM, SUM_SUM, XOR_SUM, columns
from .primitives.aggregation import (bits_of, combining_phase, completion_times, delivered_mask,
                                     post_direct, run_aggregation)
from .primitives.multicast import run_multicast, setup_multicast_trees
from .primitives.waves import (aggregate_and_broadcast, distribute_shared_randomness, post_pipelined_broadcast,
                               post_wave, sync_barrier)
from .sim import Simulation

C_DEFAULT = 8
MAX_MAX = columns("max_max", "max", "max")


def _ab(sim, values, f, participants=None):
    """Aggregate-and-broadcast where no inputs count as all zeros."""
    out = aggregate_and_broadcast(sim, values, f, participants=participants)
    return tuple(out) if out else (0,) * f.width


class OrientationFailure(RuntimeError):
    """A learner was still unsuccessful after the second identification."""


# -- identification -------------------------------------------------------
def trial_table(hashes, e: np.ndarray, q: int) -> np.ndarray:
    """Trials of directed edge ids ``e``: ``(len(e), s)`` with repeats as -1."""
    tr = np.stack([h.uniform(q, e) for h in hashes], axis=1) if len(e) else np.zeros((0, len(hashes)), np.int64)
    tr = np.sort(tr, axis=1)
    dup = np.zeros_like(tr, dtype=bool)
    dup[:, 1:] = tr[:, 1:] == tr[:, :-1]
    tr[dup] = -1
    return tr


def _flatten_trials(owner, e, tr, q):
    """(key = owner * q + trial, edge id) for every participation."""
    s = tr.shape[1]
    t = tr.ravel()
    ok = t >= 0
    return (np.repeat(owner, s) * q + t)[ok], np.repeat(e, s)[ok]


@dataclass
class IdentificationResult:
    learners: np.ndarray
    success: np.ndarray
    red: dict
    playing: dict
    rounds: int
    stats: dict = field(default_factory=dict)


def run_identification(sim: Simulation, g: InputGraph, learners, player, potential, s: int, q: int,
                       exclude=None, ell2_hat: int | None = None, hashes=None,
                       label: str = "identification") -> IdentificationResult:
    """Every learner finds which neighbors are playing.

    ``(player[k], potential[k])`` lists, for every playing node, its
    potentially learning neighbors.  ``exclude`` holds directed edge ids
    ``u * n + v`` of red edges already known to their learner ``u``.
    """
    start = sim.round
    n = g.n
    learners = np.unique(np.asarray(learners, dtype=np.int64))
    player = np.asarray(player, dtype=np.int64)
    potential = np.asarray(potential, dtype=np.int64)
    if hashes is None:
        hashes = [sim.hash(f"{label}-h{j}") for j in range(s)]
    # players: (id(w, v), 1) into A_{id(w) ∘ i} for every trial of (w, v)
    e_play = potential * n + player
    keys_p, e_p = _flatten_trials(potential, e_play, trial_table(hashes, e_play, q), q)
    memb = e_p % n
    tgt = keys_p // q
    if ell2_hat is None:
        ell2_hat = q
    res = run_aggregation(sim, memb, keys_p, np.stack([e_p, np.ones_like(e_p)], axis=1), tgt, XOR_SUM,
                          ell2_hat=min(q, ell2_hat), label=label)
    # learners compute X(i), x(i) over their own not yet identified edges
    is_l = np.zeros(n, dtype=bool)
    is_l[learners] = True
    sl = is_l[g.adj_src]
    lu, lv = g.adj_src[sl], g.indices[sl]
    e_own = lu * n + lv
    if exclude is not None and len(exclude):
        keep = ~np.isin(e_own, np.asarray(exclude, dtype=np.int64))
        lu, lv, e_own = lu[keep], lv[keep], e_own[keep]
    keys_l, e_l = _flatten_trials(lu, e_own, trial_table(hashes, e_own, q), q)
    ukeys, inv = np.unique(keys_l, return_inverse=True)
    D = np.zeros(len(ukeys), dtype=np.int64)
    C = np.zeros(len(ukeys), dtype=np.int64)
    np.bitwise_xor.at(D, inv, e_l)
    np.add.at(C, inv, 1)
    got = res.received & is_l[np.clip(res.targets, 0, n - 1)]
    gk = res.groups[got]
    pos = np.searchsorted(ukeys, gk)
    hit = (pos < len(ukeys)) & (ukeys[np.minimum(pos, max(len(ukeys) - 1, 0))] == gk) if len(ukeys) else \
        np.zeros(len(gk), bool)
    np.bitwise_xor.at(D, pos[hit], res.values[got][hit, 0])
    np.subtract.at(C, pos[hit], res.values[got][hit, 1])
    # peeling: a trial with exactly one red edge reveals it
    found = []
    while True:
        one = np.flatnonzero(C == 1)
        if len(one) == 0:
            break
        ids = np.unique(D[one])
        ids = ids[(ids >= 0) & (ids < n * n)]
        ids = ids[np.isin(ids, e_own)]
        if len(ids) == 0:
            break
        found.append(ids)
        kk, ee = _flatten_trials(ids // n, ids, trial_table(hashes, ids, q), q)
        p = np.searchsorted(ukeys, kk)
        np.bitwise_xor.at(D, p, ee)
        np.subtract.at(C, p, 1)
    red_ids = np.unique(np.concatenate(found)) if found else np.zeros(0, np.int64)
    open_learner = np.unique(ukeys[C != 0] // q)
    success = ~np.isin(learners, open_learner)
    red, playing = {}, {}
    ru, rv = red_ids // n, red_ids % n
    excl = set(np.asarray(exclude if exclude is not None else [], dtype=np.int64).tolist())
    for u in learners.tolist():
        r = rv[ru == u]
        red[u] = r
        nb = g.neighbors(u)
        known = np.array([v for v in nb.tolist() if u * n + v in excl], dtype=np.int64) if excl else ()
        playing[u] = np.setdiff1d(nb, np.concatenate([r, np.asarray(known, np.int64)]))
    stats = dict(s=s, q=q, learners=len(learners), unsuccessful=int((~success).sum()),
                 L=int(len(keys_p)))
    sim.record("identification", start, **stats)
    return IdentificationResult(learners, success, red, playing, sim.round - start, stats)


# -- helpers for stage 2, step 2 -------------------------------------------
def gather_and_broadcast_ids(sim: Simulation, ids, label: str = "id-broadcast") -> int:
    """Identifiers travel to node 0 (smallest first on contention, never
    combined) and are broadcast back in a pipelined fashion.

    Returns the round by which every node holds all identifiers.
    """
    ids = np.sort(np.asarray(ids, dtype=np.int64))
    k = len(ids)
    start = sim.round
    bits = bits_of(np.arange(sim.n)) + 1
    att = ids[ids >= sim.P]
    if len(att):
        sim.net.post(np.full(len(att), start), att, att - sim.P, bits=bits, control=True, label=label)
    sim.net.advance_to(start + 1)
    col = sim.bf.home_column(ids)
    ready, _, _ = combining_phase(sim, col, np.arange(k), np.arange(k), np.zeros(k, dtype=np.int64), bits, label)
    done = post_pipelined_broadcast(sim, k, int(ready[0]), bits, label + "-pipeline")
    sim.net.advance_to(max(done, int(ready.max())))
    sim.record(label, start, items=k)
    return sim.round


# -- the algorithm ------------------------------------------------------------
@dataclass
class Orientation:
    graph: InputGraph
    head: np.ndarray            # head endpoint of every edge row
    views: np.ndarray           # (m, 2): head as known by edges[:,0] and edges[:,1]
    level: np.ndarray
    phases: int
    rounds: int
    snapshots: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def tail(self) -> np.ndarray:
        e = self.graph.edges
        return np.where(self.head == e[:, 0], e[:, 1], e[:, 0])

    @property
    def outdeg(self) -> np.ndarray:
        return np.bincount(self.tail, minlength=self.graph.n) if self.graph.m else np.zeros(self.graph.n, np.int64)

    @property
    def indeg(self) -> np.ndarray:
        return np.bincount(self.head, minlength=self.graph.n) if self.graph.m else np.zeros(self.graph.n, np.int64)

    def out_neighbors(self, u: int) -> np.ndarray:
        return np.sort(self.head[self.tail == u])

    def in_neighbors(self, u: int) -> np.ndarray:
        return np.sort(self.tail[self.head == u])

    def export_lines(self) -> list[str]:
        e = self.graph.edges
        out = [f"{u} {v} {'->' if h == v else '<-'}" for (u, v), h in zip(e.tolist(), self.head.tolist())]
        out += [f"{u} {lv} {d}" for u, (lv, d) in enumerate(zip(self.level.tolist(), self.outdeg.tolist()))]
        return out


def compute_orientation(sim: Simulation, g: InputGraph, c: int = C_DEFAULT, max_phases: int | None = None,
                        first_trials: tuple[int, int] | None = None) -> Orientation:
    """Orient every edge of ``g``; ``c`` is the identification constant.

    ``first_trials`` overrides ``(s, q)`` of the first identification, which
    lets tests drive nodes into the second step.
    """
    start = sim.round
    n, m = g.n, g.m
    log_n = max(1.0, math.log2(n)) if n > 1 else 1.0
    E = g.edges
    deg = g.degree
    head = np.full(m, -1, dtype=np.int64)
    views = np.full((m, 2), -1, dtype=np.int64)
    level = np.full(n, -1, dtype=np.int64)
    inactive = np.zeros(n, dtype=bool)
    # (v, w): v -> w was decided while w was waiting
    pot_v = np.zeros(0, dtype=np.int64)
    pot_w = np.zeros(0, dtype=np.int64)
    d_star = 0
    snapshots = []
    phase_stats = []
    i = 0
    limit = max_phases or (4 * math.ceil(log_n) + 8)
    src, nbr, eid = g.adj_src, g.indices, g.adj_edge
    side = (E[eid, 1] == src).astype(np.int64)  # which endpoint column ``src`` is

    def set_view(mask):
        views[eid[mask], side[mask]] = head[eid[mask]]

    while True:
        i += 1
        if i > limit:
            raise OrientationFailure(f"no termination after {limit} phases")
        # stage 1: d_i(u) = d(u) - inactive in-neighbors
        if i == 1:
            d_i = deg.copy()
        else:
            agg = run_aggregation(sim, pot_v, pot_w, np.ones(len(pot_v), dtype=np.int64), pot_w, SUM,
                                  ell2_hat=1, label="orientation-stage1")
            cnt = np.zeros(n, dtype=np.int64)
            ok = agg.received
            cnt[agg.groups[ok]] = agg.values[ok, 0]
            d_i = deg - cnt
        d_i[inactive] = 0
        alive = ~inactive
        S, Cnt = _ab(sim, np.stack([d_i, (d_i > 0).astype(np.int64)], axis=1), SUM_SUM,
                                         participants=alive)
        zero = alive & (d_i == 0)
        level[zero] = i
        # zero-degree nodes know all their edges point at them
        zmask = zero[src]
        head[eid[zmask]] = src[zmask]
        set_view(zmask)
        active = alive & (d_i > 0) & (d_i * Cnt <= 2 * S)
        waiting = alive & (d_i > 0) & ~active
        snapshots.append(dict(phase=i, sum=int(S), count=int(Cnt), d=d_i.copy(), active=active.copy(),
                              waiting=waiting.copy()))
        inactive |= zero
        if Cnt == 0:
            break
        level[active] = i

        # stage 2, step 1
        blue = np.where(alive, deg - d_i, 0)
        d_i_star, max_blue = _ab(
            sim, np.stack([np.where(active, d_i, 0), blue], axis=1), MAX_MAX)
        d_star = max(d_star, d_i_star)
        s1 = c
        q1 = math.ceil(4 * math.e * c * d_star * log_n)
        if first_trials is not None:
            s1, q1 = first_trials
        distribute_shared_randomness(sim, s1)
        learners = np.flatnonzero(active)
        keep = inactive[pot_v]
        idr = run_identification(sim, g, learners, pot_v[keep], pot_w[keep], s1, q1,
                                 ell2_hat=s1 * max(1, max_blue), label="orientation-identify1")
        red = dict(idr.red)
        unsucc = learners[~idr.success]
        high_thr = n / log_n
        is_high = np.zeros(n, dtype=bool)
        is_high[unsucc] = blue[unsucc] > high_thr
        is_low = np.zeros(n, dtype=bool)
        is_low[unsucc] = ~is_high[unsucc]
        n_high, n_low = _ab(
            sim, np.stack([is_high, is_low], axis=1).astype(np.int64), SUM_SUM)
        st = dict(phase=i, unsuccessful=len(unsucc), high=int(n_high), low=int(n_low), d_star=int(d_star))

        # stage 2, step 2: high-degree nodes broadcast their identifiers
        if n_high:
            hi_ids = np.flatnonzero(is_high)
            t0 = gather_and_broadcast_ids(sim, hi_ids, label="orientation-high-ids")
            # u sends id(u) to every v in R_u = U_high ∩ N(u)
            sel = alive[src] & is_high[nbr]
            su, sv = src[sel], nbr[sel]
            r_cnt = np.bincount(su, minlength=n)
            window = np.maximum(r_cnt[su], max(1, d_i_star))
            desired = t0 + sim.private("orientation-high-reply").uniform(window, su, sv)
            rounds, handle, local = post_direct(sim, su, sv, desired, bits_of(np.arange(n)),
                                                "orientation-high-reply")
            done = completion_times(n, su, rounds, t0)
            sync_barrier(sim, done, label="orientation-barrier")
            ok = delivered_mask(len(su), handle, local)
            for v in hi_ids.tolist():
                red[v] = np.unique(su[ok & (sv == v)])

        # stage 2, step 2: low-degree nodes run a second identification
        if n_low:
            keep = inactive[pot_v]
            tv, tw = pot_v[keep], pot_w[keep]
            trees = setup_multicast_trees(sim, tv, tw, {int(w): int(w) for w in np.unique(tw)},
                                          label="orientation-low-trees")
            lows = np.flatnonzero(is_low)
            has_tree = set(tw.tolist())
            mc = run_multicast(sim, trees, {int(w): 1 for w in lows.tolist() if w in has_tree},
                               ell_hat=max(1, d_star), label="orientation-low-multicast")
            got = mc.delivered & is_low[mc.group]
            s2 = math.ceil(c * log_n)
            q2 = math.ceil(4 * math.e * c * log_n ** 2)
            distribute_shared_randomness(sim, s2)
            excl = np.concatenate([u * n + red[u] for u in lows.tolist()]) if len(lows) else np.zeros(0, np.int64)
            id2 = run_identification(sim, g, lows, mc.member[got], mc.group[got], s2, q2, exclude=excl,
                                     label="orientation-identify2")
            if not id2.success.all():
                bad = id2.learners[~id2.success]
                raise OrientationFailure(
                    f"phase {i}: nodes {bad[:8].tolist()} failed the second identification "
                    f"(seed={sim.config.seed}, s={s2}, q={q2})")
            for u in lows.tolist():
                red[u] = np.union1d(red[u], id2.red[u])
        phase_stats.append(st)

        # stage 3: rendezvous of active-active edges
        au = np.concatenate([np.full(len(red[u]), u, dtype=np.int64) for u in learners.tolist()]) \
            if len(learners) else np.zeros(0, np.int64)
        av = np.concatenate([np.asarray(red[u], dtype=np.int64) for u in learners.tolist()]) \
            if len(learners) else np.zeros(0, np.int64)
        eid_r = np.minimum(au, av) * n + np.maximum(au, av)
        t3 = sim.round
        hh = sim.hash("orientation-rendezvous-h").uniform(n, eid_r)
        rr = sim.hash("orientation-rendezvous-r").uniform(max(1, d_i_star), eid_r)
        bits = bits_of([n * n])
        rounds, handle, local = post_direct(sim, au, hh, t3 + rr, bits, "orientation-edge-msg")
        ok = delivered_mask(len(au), handle, local)
        # a node receiving two messages with one edge id in one round replies to both
        key = (hh * (n * n) + eid_r)[ok]
        rk = rounds[ok]
        order = np.lexsort((rk, key))
        ks, rs = key[order], rk[order]
        pair = np.zeros(len(ks), dtype=bool)
        if len(ks) > 1:
            same = (ks[1:] == ks[:-1]) & (rs[1:] == rs[:-1])
            pair[1:] |= same
            pair[:-1] |= same
        idx = np.flatnonzero(ok)[order[pair]]
        rounds2, handle2, local2 = post_direct(sim, hh[idx], au[idx], rounds[idx] + 1, bits,
                                               "orientation-rendezvous-reply")
        done = completion_times(n, np.concatenate([au, hh[idx]]), np.concatenate([rounds, rounds2]), t3)
        sim.net.advance_to(max(t3 + max(1, d_i_star) + 1, int(done.max())))
        ok2 = delivered_mask(len(idx), handle2, local2)
        both_active = np.zeros(len(au), dtype=bool)
        both_active[idx[ok2]] = True
        sync_barrier(sim, label="orientation-barrier")

        # active nodes now know every incident edge
        amask = active[src]
        # blue edges (to inactive neighbors) point at the active node
        blue_mask = amask & inactive[nbr]
        head[eid[blue_mask]] = src[blue_mask]
        k_red = np.searchsorted(g.edge_ids(), eid_r)
        head[k_red] = np.where(both_active, np.maximum(au, av), av)
        views[k_red, (E[k_red, 1] == au).astype(np.int64)] = head[k_red]
        set_view(blue_mask)
        waiting_red = ~both_active
        pot_v = np.concatenate([pot_v, au[waiting_red]])
        pot_w = np.concatenate([pot_w, av[waiting_red]])
        inactive |= active
    # nodes learned the remaining directions as their endpoints became active
    rounds_total = sim.round - start
    sim.record("orientation", start, phases=i)
    o = Orientation(g, head, views, level, i, rounds_total, snapshots,
                    dict(d_star=int(d_star), phases=phase_stats))
    return o


def orientation_run(g: InputGraph, seed: int = 0, **cfg) -> tuple[Orientation, Simulation]:
    sim = Simulation(g.n, seed=seed, **cfg)
    return compute_orientation(sim, g), sim
