"""The d-dimensional butterfly emulated on top of the clique.

Node ``j < 2**d`` emulates column ``j`` (all ``d + 1`` levels).  A node
``v >= 2**d`` emulates nothing and is attached to the level-0 node whose
column equals ``v`` with the most significant bit stripped.  Bit ``i`` of a
column is the i-th least significant bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class BfCoordinate(NamedTuple):
    level: int
    column: int


def dimension(n: int) -> int:
    if n < 1:
        raise ValueError("n must be at least 1")
    return n.bit_length() - 1


@dataclass(frozen=True)
class ButterflyMap:
    n: int
    d: int

    @property
    def columns(self) -> int:
        return 1 << self.d

    @property
    def size(self) -> int:
        return (self.d + 1) * self.columns

    def emulator(self, column: int) -> int:
        if not 0 <= column < self.columns:
            raise ValueError(f"column {column} out of range")
        return column

    def attachment(self, v: int) -> BfCoordinate:
        """Level-0 BF node a node feeds into (its own column if it emulates)."""
        if not 0 <= v < self.n:
            raise ValueError(f"node {v} out of range")
        return BfCoordinate(0, v - self.columns if v >= self.columns else v)

    def attached(self, column: int) -> int | None:
        """The non-emulating node attached to ``column``, if any."""
        v = column + self.columns
        return v if v < self.n else None

    @property
    def has_attached(self) -> bool:
        return self.n > self.columns

    def home_column(self, nodes) -> np.ndarray:
        """Vectorized attachment column of each node."""
        nodes = np.asarray(nodes, dtype=np.int64)
        return np.where(nodes >= self.columns, nodes - self.columns, nodes)

    def bf_index(self, c: BfCoordinate) -> int:
        return c.level * self.columns + c.column

    def coordinate(self, index: int) -> BfCoordinate:
        return BfCoordinate(index // self.columns, index % self.columns)

    def neighbors(self, c: BfCoordinate) -> list[BfCoordinate]:
        return bf_neighbors(c, self.d)

    def path(self, column: int, target_column: int) -> list[BfCoordinate]:
        """The unique level-0 to level-d path between two columns."""
        c = BfCoordinate(0, column)
        out = [c]
        while c.level < self.d:
            c = route_next_hop(c, target_column, self.d)
            out.append(c)
        return out


def build_map(n: int) -> ButterflyMap:
    return ButterflyMap(n=n, d=dimension(n))


def _check(c: BfCoordinate, d: int) -> None:
    if not (0 <= c.level <= d and 0 <= c.column < (1 << d)):
        raise ValueError(f"{c} is not a node of the {d}-dimensional butterfly")


def bf_neighbors(c: BfCoordinate, d: int) -> list[BfCoordinate]:
    """Straight and cross neighbours one level up and one level down."""
    c = BfCoordinate(*c)
    _check(c, d)
    l, col = c
    out = []
    if l > 0:
        out.append(BfCoordinate(l - 1, col))
        out.append(BfCoordinate(l - 1, col ^ (1 << (l - 1))))
    if l < d:
        out.append(BfCoordinate(l + 1, col))
        out.append(BfCoordinate(l + 1, col ^ (1 << l)))
    return out


def route_next_hop(c: BfCoordinate, target_column: int, d: int) -> BfCoordinate:
    """Next node on the descending path: fix bit ``level`` to the target's."""
    c = BfCoordinate(*c)
    _check(c, d)
    if c.level >= d:
        raise ValueError("level-d nodes have no next hop")
    bit = 1 << c.level
    return BfCoordinate(c.level + 1, (c.column & ~bit) | (target_column & bit))
