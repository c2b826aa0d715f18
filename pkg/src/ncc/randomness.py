"""Seeded pseudorandom functions standing in for shared hash functions.

All nodes agree on a byte pool (distributed through the butterfly, see
:func:`distribute_shared_randomness`); named hash functions are keyed by a
digest of the pool, the function name and an invocation nonce.  Evaluation is
splitmix64 over numpy ``uint64`` arrays, so hashing a million identifiers is
one vectorized call.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

POOL_BYTES_PER_FUNCTION = 160

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_S30, _S27, _S31, _S32 = np.uint64(30), np.uint64(27), np.uint64(31), np.uint64(32)


def mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, elementwise on uint64."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _key_from(*parts) -> int:
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        if isinstance(p, (bytes, bytearray)):
            h.update(bytes(p))
        else:
            h.update(repr(p).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


class PRF:
    """Keyed function from integer tuples to 64-bit words."""

    def __init__(self, key: int):
        self.key = np.uint64(key & 0xFFFFFFFFFFFFFFFF)

    def words(self, *xs) -> np.ndarray:
        with np.errstate(over="ignore"):
            h = mix64(np.full(1, self.key, dtype=np.uint64))
            for x in xs:
                x = np.asarray(x).astype(np.uint64)
                h = mix64(h ^ (x * _GOLDEN + self.key))
        return h

    def uniform(self, m, *xs) -> np.ndarray:
        """Integers uniform in ``[0, m)`` (``m`` scalar or array, ``m < 2**32``)."""
        h = self.words(*xs) >> _S32
        m = np.asarray(m).astype(np.uint64)
        with np.errstate(over="ignore"):
            return ((h * m) >> _S32).astype(np.int64)

    def bits63(self, *xs) -> np.ndarray:
        """Non-negative 63-bit integers (fit in int64)."""
        return (self.words(*xs) >> np.uint64(1)).astype(np.int64)

    def bit(self, *xs) -> np.ndarray:
        return (self.words(*xs) >> np.uint64(63)).astype(np.int64)

    def coin(self, *xs) -> np.ndarray:
        return self.bit(*xs).astype(bool)


class SharedRandomness:
    """Pool of seed material held identically by all nodes."""

    def __init__(self, pool: bytes):
        self.pool = bytes(pool)
        self._digest = hashlib.blake2b(self.pool, digest_size=16).digest()

    @classmethod
    def from_seed(cls, seed: int, num_functions: int) -> "SharedRandomness":
        return cls(make_pool(seed, num_functions))

    @property
    def num_functions(self) -> int:
        return len(self.pool) // POOL_BYTES_PER_FUNCTION

    def function(self, name: str, nonce: int = 0) -> PRF:
        return PRF(_key_from(self._digest, name, nonce))


def make_pool(seed: int, num_functions: int, bytes_per_function: int = POOL_BYTES_PER_FUNCTION) -> bytes:
    rng = np.random.Generator(np.random.PCG64([seed & 0xFFFFFFFFFFFFFFFF, 0x5EED]))
    return rng.bytes(num_functions * bytes_per_function)


def private_prf(seed: int, purpose: str, nonce: int = 0) -> PRF:
    """Node-private randomness: callers always pass the node id as first input."""
    return PRF(_key_from(seed, "private", purpose, nonce))


def chunk_count(total_bits: int, chunk_bits: int) -> int:
    return math.ceil(total_bits / chunk_bits) if total_bits > 0 else 0
