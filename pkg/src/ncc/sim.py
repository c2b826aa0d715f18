"""Simulation context shared by the primitives and algorithms."""

from __future__ import annotations

import math

import numpy as np

from .butterfly import build_map
from .net import Network, NetworkConfig
from .randomness import PRF, SharedRandomness, private_prf


class Simulation:
    """One NCC network instance: round engine, butterfly map, randomness.

    ``shared`` is ``None`` until shared randomness has been distributed; the
    primitives need it for their hash functions.
    """

    def __init__(self, n: int, config: NetworkConfig | None = None, **overrides):
        if config is None:
            config = NetworkConfig(n=n, **overrides)
        elif config.n != n or overrides:
            from dataclasses import replace
            config = replace(config, n=n, **overrides)
        self.config = config
        self.n = n
        self.net = Network(config)
        self.bf = build_map(n)
        self.d = self.bf.d
        self.P = self.bf.columns
        self.shared: SharedRandomness | None = None
        self._nonce = 0
        # ceil(log2 n), at least 1: batch sizes and postprocessing windows
        self.log_n = max(1, math.ceil(math.log2(n))) if n > 1 else 1

    @property
    def round(self) -> int:
        return self.net.round

    @property
    def capacity(self) -> int:
        return self.net.capacity

    @property
    def trace(self):
        return self.net.trace

    def next_nonce(self) -> int:
        self._nonce += 1
        return self._nonce

    def hash(self, name: str) -> PRF:
        """A fresh shared hash function (new invocation nonce)."""
        if self.shared is None:
            from .primitives.waves import distribute_shared_randomness
            distribute_shared_randomness(self, 1)
        return self.shared.function(name, self.next_nonce())

    def private(self, name: str) -> PRF:
        """Fresh node-private randomness; evaluate with the node id first."""
        return private_prf(self.config.seed, name, self.next_nonce())

    def record(self, primitive: str, start: int, **fields) -> dict:
        rec = {"primitive": primitive, "start": int(start), "rounds": int(self.round - start)}
        rec.update({k: (int(v) if isinstance(v, (np.integer, bool, np.bool_)) else v) for k, v in fields.items()})
        self.net.trace.primitives.append(rec)
        return rec
