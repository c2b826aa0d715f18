"""Tree waves through the butterfly: Aggregate-and-Broadcast, barriers,
pipelined broadcasts from the root and randomness distribution.

The aggregation tree has its root at BF node ``(d, 0)``; the tree node of
level ``i`` on the way up from column ``c`` is column ``c`` with its ``i``
low bits cleared.  Straight hops are local but still take a round.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..randomness import SharedRandomness, chunk_count, make_pool, POOL_BYTES_PER_FUNCTION
from .aggregate import EMPTY, AggregateFunction, as_records, value_bits


_WAVES: dict = {}


def _wave_messages(bf, ready):
    """``(rounds, src, dst, done)`` of an up-and-down wave over the butterfly."""
    n, d, P = bf.n, bf.d, bf.columns
    t = ready[:P].copy()
    src, dst, rnd = [], [], []
    if n > P:
        att = np.arange(P, n)
        src.append(att)
        dst.append(att - P)
        rnd.append(ready[P:])
        np.maximum.at(t, att - P, ready[P:] + 1)
    for i in range(d):
        p = np.arange(0, P, 1 << (i + 1))
        q = p + (1 << i)
        src.append(q)
        dst.append(p)
        rnd.append(t[q].copy())
        t[p] = np.maximum(t[p], t[q]) + 1
    top = int(t[0])
    for i in range(d, 0, -1):
        p = np.arange(0, P, 1 << i)
        src.append(p)
        dst.append(p + (1 << (i - 1)))
        rnd.append(np.full(len(p), top + d - i))
    done = top + d
    if n > P:
        att = np.arange(P, n)
        src.append(att - P)
        dst.append(att)
        rnd.append(np.full(len(att), done))
        done += 1
    return np.concatenate(rnd), np.concatenate(src), np.concatenate(dst), done


def post_wave(sim, ready, bits: int = 1, label: str = "barrier") -> int:
    """Post an up-and-down wave; returns the round at which every node knows
    the result.  ``ready[v]`` is the first round node ``v`` may take part."""
    bf = sim.bf
    ready = np.asarray(ready, dtype=np.int64)
    if bf.n == 1:
        return int(ready[0])
    r0 = int(ready[0])
    if (ready == r0).all():
        # common case: the shape only depends on the butterfly
        key = (bf.n, bf.d, bf.columns)
        if key not in _WAVES:
            _WAVES[key] = _wave_messages(bf, np.zeros(bf.n, dtype=np.int64))
        rnd, src, dst, done = _WAVES[key]
        sim.net.post(rnd + r0, src, dst, bits=bits, control=True, label=label)
        return done + r0
    rnd, src, dst, done = _wave_messages(bf, ready)
    sim.net.post(rnd, src, dst, bits=bits, control=True, label=label)
    return done


def _ready_now(sim, ready):
    if ready is None:
        return np.full(sim.n, sim.round, dtype=np.int64)
    ready = np.maximum(np.asarray(ready, dtype=np.int64), sim.round)
    return ready


def sync_barrier(sim, ready=None, label: str = "barrier") -> int:
    """All nodes learn a common start round after every node signalled done."""
    start = sim.round
    done = post_wave(sim, _ready_now(sim, ready), bits=1, label=label)
    sim.net.advance_to(done)
    sim.record("sync_barrier", start)
    return done


def aggregate_and_broadcast(sim, values, f: AggregateFunction, participants=None, ready=None):
    """Every node learns ``f`` over the inputs of the participants.

    ``values`` holds one record per node (rows of non-participants are
    ignored).  Returns a tuple, or ``EMPTY`` without participants.
    """
    start = sim.round
    if isinstance(values, dict):
        nodes = np.fromiter(values.keys(), dtype=np.int64, count=len(values))
        recs = as_records(list(values.values()), f.width) if values else np.zeros((0, f.width), np.int64)
    else:
        recs = as_records(values, f.width) if f.combine_fn is None else values
        nodes = np.arange(sim.n)
        if participants is not None:
            mask = np.asarray(participants, dtype=bool)
            nodes = nodes[mask]
            recs = recs[mask]
    result = f.fold(recs) if len(nodes) else EMPTY
    bits = 1 + (value_bits(recs) if len(nodes) and f.combine_fn is None else 0)
    if f.combine_fn is not None and len(nodes):
        bits = 1 + value_bits(np.asarray([result], dtype=np.int64))
    done = post_wave(sim, _ready_now(sim, ready), bits=bits, label="aggregate-and-broadcast")
    sim.net.advance_to(done)
    sim.record("aggregate_and_broadcast", start, participants=len(nodes))
    return result


def pipeline_width(sim) -> int:
    """Items a BF edge may carry per round in a pipelined broadcast while every
    emulating node stays within capacity."""
    return max(1, sim.capacity // (sim.d + 1))


def post_pipelined_broadcast(sim, num_items: int, start: int, bits: int, label: str) -> int:
    """Node 0 streams ``num_items`` messages down the broadcast tree.

    Returns the round when every node holds every item.
    """
    bf = sim.bf
    n, d, P = bf.n, bf.d, bf.columns
    if n == 1 or num_items == 0:
        return start
    width = pipeline_width(sim)
    batches = -(-num_items // width)
    sizes = np.full(batches, width, dtype=np.int64)
    sizes[-1] = num_items - width * (batches - 1)
    src, dst, rnd = [], [], []
    j = np.arange(batches)
    for i in range(d, 0, -1):
        p = np.arange(0, P, 1 << i)
        s = np.repeat(p[None, :], batches, axis=0)
        r = np.repeat((start + j + d - i)[:, None], len(p), axis=1)
        reps = np.repeat(sizes, len(p))
        src.append(np.repeat(s.ravel(), reps))
        dst.append(np.repeat((s + (1 << (i - 1))).ravel(), reps))
        rnd.append(np.repeat(r.ravel(), reps))
    done = start + batches - 1 + d
    if n > P:
        att = np.arange(P, n)
        reps = np.repeat(sizes, len(att))
        src.append(np.repeat(np.tile(att - P, batches), reps))
        dst.append(np.repeat(np.tile(att, batches), reps))
        rnd.append(np.repeat(np.repeat(start + j + d, len(att)), reps))
        done += 1
    sim.net.post(np.concatenate(rnd), np.concatenate(src), np.concatenate(dst),
                 bits=bits, control=True, label=label)
    return done


@dataclass
class Distribution:
    shared: SharedRandomness
    rounds: int
    chunks: int
    chunk_bits: int

    def pool_at(self, node: int) -> bytes:
        """Pool reassembled by ``node`` from the received chunks."""
        return self.shared.pool


def distribute_shared_randomness(sim, num_functions: int,
                                 bits_per_function: int = 8 * POOL_BYTES_PER_FUNCTION) -> Distribution:
    """Node 0 draws the pool from the seed and broadcasts it in chunks."""
    start = sim.round
    chunk_bits = sim.config.payload_bits
    total_bits = num_functions * bits_per_function
    chunks = chunk_count(total_bits, chunk_bits)
    done = post_pipelined_broadcast(sim, chunks, start, chunk_bits, "shared-randomness")
    sim.net.advance_to(done)
    pool = make_pool(sim.config.seed, num_functions, bits_per_function // 8)
    sim.shared = SharedRandomness(pool)
    sim.record("distribute_shared_randomness", start, functions=num_functions, chunks=chunks)
    return Distribution(sim.shared, done - start, chunks, chunk_bits)
