"""Distributive aggregate functions over fixed-width integer records.

Values are int64 rows; a function of width ``w`` combines rows column-wise
(``sum``/``min``/``max``/``xor`` per column) or lexicographically
(``lexmin``).  Arbitrary Python combiners are allowed too; they are checked
for associativity and commutativity on random samples when requested.
"""

from __future__ import annotations

import functools
from typing import Callable, Sequence

import numpy as np

_UFUNCS = {
    "sum": np.add,
    "min": np.minimum,
    "max": np.maximum,
    "xor": np.bitwise_xor,
}


class _Empty:
    """Result of aggregating over no inputs; acts as the identity."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "EMPTY"

    def __bool__(self):
        return False

    def __reduce__(self):
        return (_Empty, ())


EMPTY = _Empty()


class ConfigurationError(ValueError):
    pass


class AggregateFunction:
    """``ops`` is a sequence of per-column operation names, or ``"lexmin"``.

    ``combine`` (optional) is a binary Python function on tuples used instead
    of the vectorized path.
    """

    def __init__(self, name: str, ops: Sequence[str] | str | None = None,
                 combine: Callable | None = None, width: int = 1):
        self.name = name
        self.combine_fn = combine
        if combine is not None:
            self.ops = None
            self.width = width
        elif ops == "lexmin":
            self.ops = "lexmin"
            self.width = width
        else:
            ops = list(ops)
            for op in ops:
                if op not in _UFUNCS:
                    raise ConfigurationError(f"unknown column op {op!r}")
            self.ops = ops
            self.width = len(ops)

    def __repr__(self):
        return f"AggregateFunction({self.name})"

    # -- folding -----------------------------------------------------------
    def combine(self, x, y):
        """Combine two records (tuples); EMPTY is the identity."""
        if x is EMPTY:
            return y
        if y is EMPTY:
            return x
        if self.combine_fn is not None:
            return self.combine_fn(x, y)
        if self.ops == "lexmin":
            return min(tuple(x), tuple(y))
        return tuple(int(_UFUNCS[op](np.int64(a), np.int64(b))) for op, a, b in zip(self.ops, x, y))

    def fold(self, values) -> tuple | _Empty:
        """Aggregate a collection of records (array ``(k, w)`` or list)."""
        if self.combine_fn is not None:
            rows = [tuple(r) for r in values]
            return functools.reduce(self.combine, rows, EMPTY)
        arr = as_records(values, self.width)
        if len(arr) == 0:
            return EMPTY
        g, out = self.reduce(arr, np.zeros(len(arr), dtype=np.int64))
        return tuple(int(v) for v in out[0])

    def reduce(self, values: np.ndarray, groups: np.ndarray):
        """Per-group aggregate: returns ``(unique_groups, records)``."""
        groups = np.asarray(groups, dtype=np.int64)
        if len(groups) == 0:
            return groups, np.zeros((0, self.width), dtype=np.int64)
        if self.combine_fn is not None:
            order = np.argsort(groups, kind="stable")
            ug, starts = np.unique(groups[order], return_index=True)
            starts = list(starts) + [len(order)]
            out = []
            for a, b in zip(starts[:-1], starts[1:]):
                rows = [tuple(int(v) for v in np.atleast_1d(values[i])) for i in order[a:b]]
                out.append(functools.reduce(self.combine_fn, rows))
            return ug, np.asarray(out, dtype=np.int64).reshape(len(ug), -1)
        values = as_records(values, self.width)
        if self.ops == "lexmin":
            keys = [values[:, j] for j in range(self.width - 1, -1, -1)] + [groups]
            order = np.lexsort(keys)
            gs = groups[order]
            first = np.ones(len(gs), dtype=bool)
            first[1:] = gs[1:] != gs[:-1]
            return gs[first], values[order[first]]
        order = np.argsort(groups, kind="stable")
        gs = groups[order]
        vs = values[order]
        starts = np.flatnonzero(np.r_[True, gs[1:] != gs[:-1]])
        out = np.empty((len(starts), self.width), dtype=np.int64)
        for j, op in enumerate(self.ops):
            out[:, j] = _UFUNCS[op].reduceat(vs[:, j], starts)
        return gs[starts], out

    # -- checks ------------------------------------------------------------
    def check_algebra(self, samples, rng: np.random.Generator | None = None, trials: int = 32) -> None:
        """Randomized reassociation and commutation test on sample records."""
        rng = rng or np.random.default_rng(0)
        rows = [tuple(int(v) for v in np.atleast_1d(r)) for r in samples]
        if len(rows) < 2:
            return
        for _ in range(trials):
            k = int(rng.integers(2, min(len(rows), 8) + 1))
            pick = [rows[i] for i in rng.choice(len(rows), size=k, replace=True)]
            left = functools.reduce(self.combine, pick)
            perm = [pick[i] for i in rng.permutation(k)]
            right = _random_bracketing(self.combine, perm, rng)
            if left != right:
                raise ConfigurationError(
                    f"{self.name} is not associative/commutative: {left} != {right} on {pick}"
                )


def _random_bracketing(combine, rows, rng):
    rows = list(rows)
    while len(rows) > 1:
        i = int(rng.integers(0, len(rows) - 1))
        rows[i:i + 2] = [combine(rows[i], rows[i + 1])]
    return rows[0]


def as_records(values, width: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if width == 1 else arr.reshape(-1, width)
    if arr.shape[1] != width:
        raise ValueError(f"expected records of width {width}, got {arr.shape[1]}")
    return arr


def columns(name: str, *ops: str) -> AggregateFunction:
    return AggregateFunction(name, ops)


SUM = AggregateFunction("sum", ["sum"])
MIN = AggregateFunction("min", ["min"])
MAX = AggregateFunction("max", ["max"])
XOR = AggregateFunction("xor", ["xor"])
XOR_SUM = AggregateFunction("xor_sum", ["xor", "sum"])
XOR_XOR = AggregateFunction("xor_xor", ["xor", "xor"])
SUM_SUM = AggregateFunction("sum_sum", ["sum", "sum"])


def lexmin(width: int) -> AggregateFunction:
    return AggregateFunction(f"lexmin{width}", "lexmin", width=width)


BY_NAME = {"sum": SUM, "min": MIN, "max": MAX, "xor": XOR}


def value_bits(values) -> int:
    """Bits needed for the widest record in ``values`` (two's complement)."""
    arr = np.asarray(values, dtype=np.int64)
    if arr.size == 0:
        return 0
    arr = arr.reshape(len(arr), -1) if arr.ndim > 1 else arr.reshape(-1, 1)
    total = 0
    for j in range(arr.shape[1]):
        hi = int(np.abs(arr[:, j]).max())
        total += max(1, hi.bit_length() + (1 if arr[:, j].min() < 0 else 0))
    return total
