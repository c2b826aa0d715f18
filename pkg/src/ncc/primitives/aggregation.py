"""Aggregation: preprocessing, random-rank combining, postprocessing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .aggregate import EMPTY, AggregateFunction, ConfigurationError, as_records, value_bits
from .kernels import combine_route, spill_rounds
from .waves import post_wave


def bits_of(x) -> int:
    x = np.asarray(x)
    if x.size == 0:
        return 0
    return max(1, int(np.abs(x).max()).bit_length())


def rank_range(L: int, n: int) -> int:
    """K = 8 (L/n + 4 log2 n) rounded up to a power of two."""
    log_n = math.log2(n) if n > 1 else 1.0
    k = 8.0 * (L / n + 4.0 * log_n)
    return 1 << max(0, math.ceil(math.log2(max(1.0, k))))


def _group_starts(sorted_keys: np.ndarray) -> np.ndarray:
    if len(sorted_keys) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.flatnonzero(np.r_[True, sorted_keys[1:] != sorted_keys[:-1]])


def rank_within(keys: np.ndarray) -> np.ndarray:
    """Position of each element among equal keys, in input order."""
    order = np.argsort(keys, kind="stable")
    k = keys[order]
    starts = _group_starts(k)
    pos = np.arange(len(k)) - np.repeat(starts, np.diff(np.r_[starts, len(k)]))
    out = np.empty(len(k), dtype=np.int64)
    out[order] = pos
    return out


# -- phase helpers -------------------------------------------------------
def post_direct(sim, src, dst, desired, bits: int, label: str, order=None, control: bool = False):
    """Send one message per entry at (at least) round ``desired``.

    Senders defer overflow beyond capacity to later rounds.  Messages to self
    are local.  Returns ``(rounds, batch, local_mask)``.
    """
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    desired = np.asarray(desired, dtype=np.int64)
    rounds = desired.copy()
    local = src == dst
    remote = np.flatnonzero(~local)
    if len(remote):
        o = np.lexsort((desired[remote], src[remote]))
        idx = remote[o]
        rounds[idx] = spill_rounds(src[idx], desired[idx], sim.capacity)
    batch = sim.net.post(rounds[remote], src[remote], dst[remote], bits=bits,
                         order=None if order is None else np.asarray(order)[remote],
                         control=control, label=label)
    return rounds, (batch, remote), local


def delivered_mask(m: int, handle, local) -> np.ndarray:
    batch, remote = handle
    ok = local.copy()
    ok[remote] = batch.delivered
    return ok


def completion_times(n: int, src, rounds, base) -> np.ndarray:
    """First round after each node's last send (``base`` for idle nodes)."""
    done = np.full(n, base, dtype=np.int64)
    if len(src):
        np.maximum.at(done, np.asarray(src, dtype=np.int64), np.asarray(rounds, dtype=np.int64) + 1)
    return done


def preprocess(sim, owner, sort_key, bits: int, label: str):
    """Every node sends its packets, ``ceil(log n)`` per round in ascending
    ``sort_key`` order, to uniformly random level-0 columns."""
    owner = np.asarray(owner, dtype=np.int64)
    start = sim.round
    k = len(owner)
    order = np.lexsort((np.asarray(sort_key), owner))
    # position of each packet in its owner's enumeration
    pos = np.empty(k, dtype=np.int64)
    pos[order] = rank_within(owner[order])
    rnd = sim.private(label + "-leaf")
    col = rnd.uniform(sim.P, owner, pos) if k else np.zeros(0, dtype=np.int64)
    desired = start + pos // sim.log_n
    rounds, handle, local = post_direct(sim, owner, col, desired, bits, label, order=np.asarray(sort_key))
    done = completion_times(sim.n, owner[~local], rounds[~local], start)
    if k:
        np.maximum.at(done, owner, desired + 1)
    return col, handle, local, done


def combining_phase(sim, col, grp, gkey, tgt, bits: int, label: str, record: bool = False):
    """Route packets from level 0 to their groups' level-d columns.

    Posts packet and token messages starting at the current round and returns
    ``(ready, moves, self_delays)`` where ``ready[c]`` is the round at which BF
    node ``(d, c)`` holds both tokens.
    """
    d, P = sim.d, sim.P
    start = sim.round
    moves, lastdep, self_delays = combine_route(
        d, P, np.asarray(col, np.int64), np.asarray(grp, np.int64),
        np.asarray(gkey, np.int64), np.asarray(tgt, np.int64), record)
    cross = moves[:, 5] == 1
    if cross.any():
        mv = moves[cross]
        sim.net.post(start + mv[:, 0], mv[:, 1], mv[:, 2], bits=bits, order=mv[:, 3],
                     control=True, label=label + "-butterfly")
    lastdep = lastdep.reshape(d + 1, P)
    t = np.zeros(P, dtype=np.int64)
    cols = np.arange(P)
    tok_r, tok_s, tok_d = [], [], []
    for l in range(d):
        tau = np.maximum(t, lastdep[l] + 1)
        partner = cols ^ (1 << l)
        tok_r.append(start + tau)
        tok_s.append(cols)
        tok_d.append(partner)
        t = np.maximum(tau, tau[partner]) + 1
    if d:
        sim.net.post(np.concatenate(tok_r), np.concatenate(tok_s), np.concatenate(tok_d),
                     bits=1, control=True, label=label + "-token")
    return start + t, moves, int(self_delays)


def barrier_after(sim, ready_cols, bits: int = 1, label: str = "barrier", extra=None) -> int:
    """Barrier where emulating nodes are ready at ``ready_cols`` and the
    others now (or at ``extra``)."""
    ready = np.full(sim.n, sim.round, dtype=np.int64)
    ready[: sim.P] = np.maximum(ready[: sim.P], ready_cols)
    if extra is not None:
        ready = np.maximum(ready, extra)
    done = post_wave(sim, ready, bits=bits, label=label)
    sim.net.advance_to(done)
    return done


@dataclass
class AggregationResult:
    groups: np.ndarray
    targets: np.ndarray
    values: np.ndarray
    received: np.ndarray
    rounds: int
    stats: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        """``group id -> value tuple`` for every result that reached its target."""
        out = {}
        for g, row, ok in zip(self.groups.tolist(), self.values.tolist(), self.received.tolist()):
            if ok:
                out[g] = tuple(row)
        return out

    def by_target(self) -> dict:
        out: dict = {}
        for g, t, row, ok in zip(self.groups.tolist(), self.targets.tolist(),
                                 self.values.tolist(), self.received.tolist()):
            if ok:
                out.setdefault(t, {})[g] = tuple(row)
        return out


def run_aggregation(sim, member, group, values, target, f: AggregateFunction,
                    ell2_hat: int | None = None, label: str = "aggregation") -> AggregationResult:
    """Aggregate member inputs per group at the group's target.

    One row per (member, group) membership: ``member[k]`` holds ``values[k]``
    for group ``group[k]`` whose target is ``target[k]``.
    """
    start = sim.round
    n = sim.n
    member = np.asarray(member, dtype=np.int64)
    group = np.asarray(group, dtype=np.int64)
    target = np.asarray(target, dtype=np.int64)
    vals = as_records(values, f.width) if f.combine_fn is None else np.asarray(values, dtype=np.int64).reshape(len(member), -1)
    k = len(member)
    if k and (member.min() < 0 or member.max() >= n or target.min() < 0 or target.max() >= n):
        raise ConfigurationError("member or target outside 0..n-1")
    ug, gidx = np.unique(group, return_inverse=True)
    G = len(ug)
    gtarget = np.full(G, -1, dtype=np.int64)
    gtarget[gidx] = target
    if k and np.any(gtarget[gidx] != target):
        raise ConfigurationError("members disagree on the target of a group")
    if k:
        pair = np.unique(member * max(G, 1) + gidx)
        if len(pair) != k:
            raise ConfigurationError("a node holds two inputs for the same group")
    if sim.config.debug and f.combine_fn is not None and k > 1:
        f.check_algebra(vals[: min(k, 64)])
    ell1 = int(np.bincount(member, minlength=n).max()) if k else 0
    ell2 = int(np.bincount(gtarget, minlength=n).max()) if G else 0
    if ell2_hat is None:
        ell2_hat = ell2
    bits = bits_of(ug) + bits_of(np.arange(n)) + (value_bits(vals) if k else 0)
    sim.net.check_bits(bits, label)

    # preprocessing, then a barrier that also sums L
    col, handle, local, done = preprocess(sim, member, group, bits, label)
    b_l = max(1, bits_of([max(k, 1)]))
    s1 = post_wave(sim, done, bits=b_l, label=label + "-barrier")
    sim.net.advance_to(s1)
    ok = delivered_mask(k, handle, local)
    K = rank_range(k, n)
    rank = sim.hash(label + "-rank").uniform(K, ug)
    h = sim.hash(label + "-h").uniform(sim.P, ug)
    gkey = rank * max(G, 1) + np.arange(G)

    # combining
    t_comb = sim.round
    sel = np.flatnonzero(ok)
    ready, moves, self_delays = combining_phase(sim, col[sel], gidx[sel], gkey, h, bits, label)
    edge_load = 0
    if len(moves):
        lv = moves[:, 4] * sim.P + moves[:, 1]
        edge_load = int(np.bincount(lv * 2 + moves[:, 5]).max())
    s2 = barrier_after(sim, ready, label=label + "-barrier")

    # postprocessing
    t_post = sim.round
    ug_rec, red = f.reduce(vals[sel], gidx[sel])
    out_vals = np.zeros((G, f.width if f.combine_fn is None else red.shape[1] if len(red) else 1), dtype=np.int64)
    arrived = np.zeros(G, dtype=bool)
    if len(ug_rec):
        out_vals[ug_rec] = red
        arrived[ug_rec] = True
    gi = np.flatnonzero(arrived)
    window = max(1, math.ceil(ell2_hat / sim.log_n))
    rnd = sim.private(label + "-post")
    desired = t_post + rnd.uniform(window, h[gi], gi)
    rounds, handle2, local2 = post_direct(sim, h[gi], gtarget[gi], desired, bits, label + "-post", order=ug[gi])
    done2 = completion_times(n, h[gi][~local2], rounds[~local2], t_post)
    s3 = post_wave(sim, done2, bits=1, label=label + "-barrier")
    sim.net.advance_to(s3)
    received = np.zeros(G, dtype=bool)
    received[gi] = delivered_mask(len(gi), handle2, local2)
    stats = dict(L=k, ell1=ell1, ell2_hat=int(ell2_hat), congestion=edge_load, K=K,
                 self_delays=self_delays, combining=s2 - t_comb, lost_packets=int(k - len(sel)))
    sim.record(label, start, **stats)
    return AggregationResult(ug, gtarget, out_vals, received, sim.round - start, stats)
