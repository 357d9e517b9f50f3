"""Weighted binary index over bond rates.

Total-rate query, proportional sampling and single-leaf update all cost
O(log n). Incremental float updates drift, so the tree rebuilds itself
exactly every ``rebuild_every`` updates; this is the same structure the
simulation kernel uses internally.
"""

from __future__ import annotations

import numpy as np

from . import _kernels


class RateIndex:
    """Fenwick tree over ``size`` nonnegative leaf rates."""

    def __init__(self, rates, rebuild_every: int = 1_000_000):
        leaves = np.asarray(rates, dtype=np.float64).copy()
        if leaves.ndim != 1 or leaves.size == 0:
            raise ValueError("rates must be a non-empty 1-d sequence")
        if np.any(leaves < 0):
            raise ValueError("rates must be nonnegative")
        if rebuild_every < 1:
            raise ValueError("rebuild_every must be >= 1")
        self._leaves = leaves
        self._tree = np.zeros(leaves.size + 1)
        self._rebuild_every = int(rebuild_every)
        self._updates_since_rebuild = 0
        self._total = 0.0
        self.rebuild()

    @property
    def size(self) -> int:
        return self._leaves.size

    @property
    def leaves(self) -> np.ndarray:
        return self._leaves.copy()

    def total(self) -> float:
        return self._total

    def get(self, i: int) -> float:
        return float(self._leaves[i])

    def update(self, i: int, rate: float) -> None:
        """Set leaf i to ``rate``."""
        if not 0 <= i < self.size:
            raise IndexError(f"leaf {i} outside 0..{self.size - 1}")
        if rate < 0:
            raise ValueError("rates must be nonnegative")
        delta = rate - self._leaves[i]
        _kernels.fenwick_add(self._tree, i, delta)
        self._total += delta
        self._leaves[i] = rate
        self._updates_since_rebuild += 1
        if self._updates_since_rebuild >= self._rebuild_every:
            self.rebuild()

    def sample(self, u: float) -> int:
        """Leaf index drawn proportionally to the rates, from u in [0, 1)."""
        if not 0.0 <= u < 1.0:
            raise ValueError("u must lie in [0, 1)")
        if self._total <= 0.0:
            raise ValueError("cannot sample from an all-zero rate index")
        return int(_kernels.fenwick_find(self._tree, self.size, u * self._total))

    def rebuild(self) -> None:
        """Recompute the tree and the stored total exactly from the leaves."""
        _kernels.fenwick_build(self._tree, self._leaves)
        self._total = float(_kernels.fenwick_prefix_total(self._tree, self.size))
        self._updates_since_rebuild = 0
