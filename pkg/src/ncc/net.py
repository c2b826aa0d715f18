"""Synchronous round engine for the Node-Capacitated Clique.

Every node may send at most ``capacity`` messages per round and receives at
most ``capacity``; excess incoming messages are dropped by the network.  The
engine offers two faces:

* :func:`run` drives per-node programs (a state machine invoked once per
  round) and is the reference interface for small protocols.
* :class:`Network` processes whole rounds of messages as numpy batches.  The
  communication primitives use it directly: each round they compute, from
  node-local state only, what every node sends, and let the network decide
  what is delivered.  Messages whose send round is already fixed can be
  *posted* ahead of time and are merged into the round when it is processed.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Protocol, Sequence

import numpy as np

DROP_POLICIES = ("random-subset", "prefix")


class SimulationError(RuntimeError):
    """Base class for errors raised by the simulator."""


class CapacityViolation(SimulationError):
    """A node tried to send more messages in one round than its capacity."""


class PayloadTooLarge(SimulationError):
    """A message exceeds the configured O(log n) bit budget."""


class ProtocolStall(SimulationError):
    """A control message was dropped, so the protocol can never terminate.

    The trace up to the stall is attached as ``trace``.
    """

    def __init__(self, message: str, trace: "ExecutionTrace"):
        super().__init__(message)
        self.trace = trace


def _env_seed(seed: int) -> int:
    value = os.environ.get("NCC_SEED")
    if value is None or value.strip() == "":
        return seed
    return int(value, 0)


@dataclass(frozen=True)
class NetworkConfig:
    """Parameters shared by all nodes.

    ``capacity`` is ``ceil(kappa * log2 n)`` (at least 1) and applies to the
    send and receive side independently.  ``NCC_SEED`` in the environment
    overrides ``seed``.
    """

    n: int
    kappa: float = 8.0
    seed: int = 0
    drop_policy: str = "random-subset"
    payload_factor: int = 24
    check_payload: bool = True
    debug: bool = False
    record_per_node: bool = False
    max_rounds: int = 20_000_000

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.drop_policy not in DROP_POLICIES:
            raise ValueError(f"drop_policy must be one of {DROP_POLICIES}")
        object.__setattr__(self, "seed", _env_seed(int(self.seed)))

    @property
    def log_n(self) -> float:
        return math.log2(self.n) if self.n > 1 else 0.0

    @property
    def capacity(self) -> int:
        return max(1, math.ceil(self.kappa * self.log_n - 1e-9))

    @property
    def payload_bits(self) -> int:
        """Bit budget of one message: ``payload_factor * max(ceil(log2 n), 8)``."""
        return self.payload_factor * max(math.ceil(self.log_n), 8)

    def with_n(self, n: int) -> "NetworkConfig":
        return replace(self, n=n)


@dataclass(frozen=True, order=True)
class Message:
    src: int
    dst: int
    payload: Any = ()


def payload_bits(payload: Any) -> int:
    """Serialized size of a structured payload (ints, bytes, nested tuples)."""
    if payload is None:
        return 0
    if isinstance(payload, (bool, np.bool_)):
        return 1
    if isinstance(payload, (int, np.integer)):
        return max(1, int(payload).bit_length() + (1 if payload < 0 else 0))
    if isinstance(payload, (bytes, bytearray)):
        return 8 * len(payload)
    if isinstance(payload, str):
        return 8 * len(payload.encode())
    if isinstance(payload, (tuple, list)):
        return sum(payload_bits(p) for p in payload)
    raise TypeError(f"unsupported payload type {type(payload).__name__}")


@dataclass
class ExecutionTrace:
    """Per-round accounting of one simulation."""

    n: int
    kappa: float
    seed: int
    capacity: int
    drop_policy: str
    round_max_sent: list = field(default_factory=list)
    round_max_recv: list = field(default_factory=list)
    round_sent: list = field(default_factory=list)
    round_dropped: list = field(default_factory=list)
    node_sent: np.ndarray | None = None
    node_received: np.ndarray | None = None
    node_dropped: np.ndarray | None = None
    per_node: list = field(default_factory=list)
    primitives: list = field(default_factory=list)
    offered_total: int = 0
    delivered_total: int = 0

    def __post_init__(self):
        if self.node_sent is None:
            self.node_sent = np.zeros(self.n, dtype=np.int64)
            self.node_received = np.zeros(self.n, dtype=np.int64)
            self.node_dropped = np.zeros(self.n, dtype=np.int64)

    def _column(self, name: str) -> np.ndarray:
        chunks = getattr(self, name)
        if not chunks:
            return np.zeros(0, dtype=np.int64)
        if len(chunks) > 1:
            merged = np.concatenate(chunks)
            chunks[:] = [merged]
        return chunks[0]

    @property
    def rounds_elapsed(self) -> int:
        return int(sum(len(c) for c in self.round_sent))

    @property
    def max_sent(self) -> np.ndarray:
        return self._column("round_max_sent")

    @property
    def max_received(self) -> np.ndarray:
        return self._column("round_max_recv")

    @property
    def sent(self) -> np.ndarray:
        return self._column("round_sent")

    @property
    def dropped(self) -> np.ndarray:
        return self._column("round_dropped")

    @property
    def peak_send(self) -> int:
        col = self.max_sent
        return int(col.max()) if len(col) else 0

    @property
    def peak_recv(self) -> int:
        col = self.max_received
        return int(col.max()) if len(col) else 0

    @property
    def drop_total(self) -> int:
        return int(self.offered_total - self.delivered_total)

    def per_node_records(self) -> np.ndarray:
        """Rows ``(round, node, sent, received, dropped)`` for every node that
        sent or received in a round (only with ``record_per_node``)."""
        if not self.per_node:
            return np.zeros((0, 5), dtype=np.int64)
        return np.concatenate(self.per_node)

    def to_dict(self, per_round: bool = True) -> dict:
        out = {
            "n": self.n,
            "kappa": self.kappa,
            "seed": self.seed,
            "capacity": self.capacity,
            "rounds": self.rounds_elapsed,
            "drop_total": self.drop_total,
            "peak_send": self.peak_send,
            "peak_recv": self.peak_recv,
        }
        if per_round:
            ms, mr, dr = self.max_sent, self.max_received, self.dropped
            out["per_round"] = [
                {"round": i + 1, "max_sent": int(ms[i]), "max_recv": int(mr[i]), "dropped": int(dr[i])}
                for i in range(len(ms))
            ]
        out["primitives"] = self.primitives
        return out

    def to_json(self, per_round: bool = True) -> str:
        return json.dumps(self.to_dict(per_round=per_round), sort_keys=True)


def _select_delivered(
    rounds: np.ndarray,
    dst: np.ndarray,
    src: np.ndarray,
    order: np.ndarray,
    cap: int,
    policy: str,
    seed: int,
) -> np.ndarray:
    """Boolean mask of delivered messages.

    Messages are grouped by ``(round, dst)``; inside a group they are sorted by
    ``(src, order)``.  Groups above ``cap`` keep a prefix or a seeded random
    subset of that sorted list.
    """
    m = len(dst)
    mask = np.ones(m, dtype=bool)
    if m == 0:
        return mask
    perm = np.lexsort((order, src, dst, rounds))
    r_s, d_s = rounds[perm], dst[perm]
    boundary = np.empty(m, dtype=bool)
    boundary[0] = True
    boundary[1:] = (r_s[1:] != r_s[:-1]) | (d_s[1:] != d_s[:-1])
    starts = np.flatnonzero(boundary)
    sizes = np.diff(np.append(starts, m))
    for gi in np.flatnonzero(sizes > cap):
        lo, size = starts[gi], sizes[gi]
        if policy == "prefix":
            lost = np.arange(lo + cap, lo + size)
        else:
            rng = np.random.Generator(np.random.PCG64([seed & 0xFFFFFFFFFFFFFFFF, int(r_s[lo]), int(d_s[lo]), 0xD509]))
            keep = rng.choice(size, size=cap, replace=False)
            lost_local = np.setdiff1d(np.arange(size), keep)
            lost = lo + lost_local
        mask[perm[lost]] = False
    return mask


def deliver_round(pending: Sequence[Message], config: NetworkConfig, round_index: int = 1):
    """Deliver one round of messages.

    Returns ``(inboxes, dropped)``: ``inboxes`` maps every destination to its
    delivered messages sorted by ``(src, payload)``; ``dropped`` lists the
    messages the network discarded.
    """
    pending = list(pending)
    if not pending:
        return {}, []
    ranks = {p: i for i, p in enumerate(sorted({m.payload for m in pending}))}
    src = np.array([m.src for m in pending], dtype=np.int64)
    dst = np.array([m.dst for m in pending], dtype=np.int64)
    order = np.array([ranks[m.payload] for m in pending], dtype=np.int64)
    rounds = np.full(len(pending), round_index, dtype=np.int64)
    mask = _select_delivered(rounds, dst, src, order, config.capacity, config.drop_policy, config.seed)
    inboxes: dict[int, list[Message]] = {}
    dropped = []
    for msg, ok in zip(pending, mask):
        if ok:
            inboxes.setdefault(msg.dst, []).append(msg)
        else:
            dropped.append(msg)
    for box in inboxes.values():
        box.sort(key=lambda m: (m.src, ranks[m.payload]))
    return inboxes, dropped


class Batch:
    """Messages handed to the network; ``delivered`` is filled in once the
    rounds they belong to have been processed."""

    __slots__ = ("rounds", "src", "dst", "order", "control", "delivered", "label")

    def __init__(self, rounds, src, dst, order, control, label):
        self.rounds = rounds
        self.src = src
        self.dst = dst
        self.order = order
        self.control = control
        self.label = label
        self.delivered = np.ones(len(src), dtype=bool)


def _as_i64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.int64)


class Network:
    """Round engine over numpy message batches."""

    def __init__(self, config: NetworkConfig):
        self.config = config
        self.n = config.n
        self.capacity = config.capacity
        self.round = 0
        self._posted: list = []   # (batch, index subset or None, first round, last round)
        self.trace = ExecutionTrace(
            n=config.n, kappa=config.kappa, seed=config.seed,
            capacity=config.capacity, drop_policy=config.drop_policy,
        )

    # -- sending -----------------------------------------------------------
    def check_bits(self, bits: int, what: str = "message") -> None:
        if self.config.check_payload and bits > self.config.payload_bits:
            raise PayloadTooLarge(
                f"{what} needs {bits} bits, budget is {self.config.payload_bits} "
                f"({self.config.payload_factor} x ceil(log2 n))"
            )

    def post(self, rounds, src, dst, *, bits: int = 0, order=None, control: bool = False,
             label: str = "") -> Batch:
        """Schedule messages for (current or future) rounds.

        ``rounds`` is an absolute round index per message (or a scalar).
        Self-addressed messages are local work and must not be posted.
        """
        src = _as_i64(src)
        dst = _as_i64(dst)
        rounds = np.broadcast_to(_as_i64(rounds), src.shape).copy()
        order = np.zeros(len(src), dtype=np.int64) if order is None else _as_i64(order)
        batch = Batch(rounds, src, dst, order, control, label)
        if len(src) == 0:
            return batch
        self.check_bits(bits, label or "message")
        if rounds.min() < self.round:
            raise ValueError("cannot post messages into rounds already processed")
        if np.any(src == dst):
            raise ValueError("self-addressed messages are local, not network traffic")
        self._posted.append((batch, None, int(rounds.min()), int(rounds.max())))
        return batch

    def step(self, src=None, dst=None, *, bits: int = 0, order=None, label: str = "") -> np.ndarray:
        """Process the current round with the given messages plus anything
        posted for it; returns the delivered mask of the given messages."""
        if src is None:
            src = np.zeros(0, dtype=np.int64)
            dst = src
        batch = self.post(self.round, src, dst, bits=bits, order=order, label=label)
        self.advance_to(self.round + 1)
        return batch.delivered

    def advance_to(self, target: int) -> None:
        """Process every round before ``target`` (posted messages only)."""
        if target <= self.round:
            return
        if target > self.config.max_rounds:
            raise SimulationError(f"round limit {self.config.max_rounds} exceeded")
        start = self.round
        parts, keep = [], []
        for b, idx, lo, hi in self._posted:
            if lo >= target:
                keep.append((b, idx, lo, hi))
            elif hi < target:
                parts.append((b, np.arange(len(b.src)) if idx is None else idx))
            else:
                if idx is None:
                    idx = np.arange(len(b.src))
                r = b.rounds[idx]
                now = r < target
                parts.append((b, idx[now]))
                rest = idx[~now]
                keep.append((b, rest, int(r[~now].min()), hi))
        self._posted = keep
        self._process(start, target, parts)
        self.round = target

    def idle(self, k: int) -> None:
        self.advance_to(self.round + k)

    # -- accounting --------------------------------------------------------
    def _process(self, start: int, stop: int, parts) -> None:
        span = stop - start
        tr = self.trace
        n = self.n
        if not parts:
            z = np.zeros(span, dtype=np.int64)
            tr.round_max_sent.append(z)
            tr.round_max_recv.append(z)
            tr.round_sent.append(z)
            tr.round_dropped.append(z)
            return
        if len(parts) == 1:
            b, idx = parts[0]
            if len(idx) == len(b.src):
                rounds, src, dst, order = b.rounds, b.src, b.dst, b.order
            else:
                rounds, src, dst, order = b.rounds[idx], b.src[idx], b.dst[idx], b.order[idx]
        else:
            full = [len(i) == len(b.src) for b, i in parts]
            rounds = np.concatenate([b.rounds if f else b.rounds[i] for (b, i), f in zip(parts, full)])
            src = np.concatenate([b.src if f else b.src[i] for (b, i), f in zip(parts, full)])
            dst = np.concatenate([b.dst if f else b.dst[i] for (b, i), f in zip(parts, full)])
            order = np.concatenate([b.order if f else b.order[i] for (b, i), f in zip(parts, full)])
        rel = rounds - start
        cap = self.capacity
        send_key = rel * n + src
        recv_key = rel * n + dst
        if span * n <= 4_000_000:
            sent_c = np.bincount(send_key, minlength=span * n).reshape(span, n)
            recv_c = np.bincount(recv_key, minlength=span * n).reshape(span, n)
            max_sent = sent_c.max(axis=1)
            max_recv = recv_c.max(axis=1)
            over_recv = bool((max_recv > cap).any())
        else:
            uk, cnt = np.unique(send_key, return_counts=True)
            max_sent = np.zeros(span, dtype=np.int64)
            np.maximum.at(max_sent, uk // n, cnt)
            uk2, cnt2 = np.unique(recv_key, return_counts=True)
            max_recv = np.zeros(span, dtype=np.int64)
            np.maximum.at(max_recv, uk2 // n, cnt2)
            over_recv = bool((max_recv > cap).any())
            sent_c = recv_c = None
        if (max_sent > cap).any():
            r_bad = int(np.flatnonzero(max_sent > cap)[0])
            bad = np.bincount(src[rel == r_bad], minlength=n)
            u = int(bad.argmax())
            raise CapacityViolation(
                f"node {u} sent {int(bad[u])} messages in round {start + r_bad + 1}, capacity {cap}"
            )
        if over_recv:
            mask = _select_delivered(rounds, dst, src, order, cap, self.config.drop_policy, self.config.seed)
        else:
            mask = None
        m = len(src)
        delivered = m if mask is None else int(mask.sum())
        tr.offered_total += m
        tr.delivered_total += delivered
        tr.round_max_sent.append(max_sent)
        if mask is None:
            tr.round_max_recv.append(max_recv)
            tr.round_dropped.append(np.zeros(span, dtype=np.int64))
        else:
            got = np.bincount(recv_key[mask], minlength=span * n).reshape(span, n) if sent_c is not None else None
            if got is not None:
                tr.round_max_recv.append(got.max(axis=1))
            else:
                mr = np.zeros(span, dtype=np.int64)
                uk3, cnt3 = np.unique(recv_key[mask], return_counts=True)
                np.maximum.at(mr, uk3 // n, cnt3)
                tr.round_max_recv.append(mr)
            tr.round_dropped.append(np.bincount(rel[~mask], minlength=span))
        tr.round_sent.append(np.bincount(rel, minlength=span))
        tr.node_sent += np.bincount(src, minlength=n)
        if mask is None:
            tr.node_received += np.bincount(dst, minlength=n)
        else:
            tr.node_received += np.bincount(dst[mask], minlength=n)
            tr.node_dropped += np.bincount(dst[~mask], minlength=n)
        if self.config.record_per_node:
            self._record_nodes(start, rel, src, dst, mask)
        if mask is not None:
            pos = 0
            for b, idx in parts:
                k = len(idx)
                sub = mask[pos:pos + k]
                pos += k
                if not sub.all():
                    b.delivered[idx[~sub]] = False
                    if b.control:
                        raise ProtocolStall(
                            f"control message ({b.label or 'token'}) dropped in rounds "
                            f"{start + 1}..{stop}; protocol cannot terminate",
                            self.trace,
                        )

    def _record_nodes(self, start, rel, src, dst, mask) -> None:
        n = self.n
        ok = np.ones(len(src), dtype=bool) if mask is None else mask
        keys = np.concatenate([rel * n + src, rel * n + dst])
        uk = np.unique(keys)
        sent = np.zeros(len(uk), dtype=np.int64)
        recv = np.zeros(len(uk), dtype=np.int64)
        drop = np.zeros(len(uk), dtype=np.int64)
        np.add.at(sent, np.searchsorted(uk, rel * n + src), 1)
        np.add.at(recv, np.searchsorted(uk, (rel * n + dst)[ok]), 1)
        np.add.at(drop, np.searchsorted(uk, (rel * n + dst)[~ok]), 1)
        rows = np.stack([start + uk // n + 1, uk % n, sent, recv, drop], axis=1)
        self.trace.per_node.append(rows)


class NodeProgram(Protocol):
    """Per-node state machine for :func:`run`.

    ``step`` receives the messages delivered at the start of the round and
    returns ``(outgoing, halted)`` where ``outgoing`` is a list of
    ``(dst, payload)`` pairs.
    """

    def init(self, node: int, neighbors: tuple[int, ...], n: int) -> Any: ...

    def step(self, state: Any, round_index: int, inbox: list[Message]) -> tuple[list, bool]: ...


@dataclass
class RunResult:
    trace: ExecutionTrace
    outputs: list


def run(graph, program: NodeProgram, config: NetworkConfig,
        output: Callable[[Any], Any] | None = None) -> RunResult:
    """Run ``program`` at every node of ``graph`` until all nodes halt.

    A round is counted only if at least one message is offered in it.
    """
    n = graph.n
    if config.n != n:
        config = config.with_n(n)
    net = Network(config)
    states = [program.init(u, tuple(graph.neighbors(u)), n) for u in range(n)]
    halted = [False] * n
    inbox: dict[int, list[Message]] = {}
    round_index = 1
    while True:
        outgoing: list[Message] = []
        for u in range(n):
            if halted[u]:
                continue
            msgs, stop = program.step(states[u], round_index, inbox.get(u, []))
            if len(msgs) > config.capacity:
                raise CapacityViolation(
                    f"node {u} sent {len(msgs)} messages in round {round_index}, capacity {config.capacity}"
                )
            for dst, payload in msgs:
                if dst == u:
                    raise ValueError(f"node {u} addressed a message to itself")
                if not 0 <= dst < n:
                    raise ValueError(f"node {u} addressed unknown node {dst}")
                net.check_bits(payload_bits(payload))
                outgoing.append(Message(u, int(dst), payload))
            halted[u] = bool(stop)
        if not outgoing:
            if all(halted):
                break
            # Nobody is talking but someone is still running: an idle round.
            net.idle(1)
            inbox = {}
            round_index += 1
            continue
        inbox, _ = deliver_round(outgoing, config, net.round)
        src = np.array([m.src for m in outgoing], dtype=np.int64)
        dst = np.array([m.dst for m in outgoing], dtype=np.int64)
        ranks = {p: i for i, p in enumerate(sorted({m.payload for m in outgoing}))}
        order = np.array([ranks[m.payload] for m in outgoing], dtype=np.int64)
        net.step(src, dst, order=order)
        round_index += 1
        if all(halted):
            break
    outputs = [output(s) if output else s for s in states]
    return RunResult(net.trace, outputs)
