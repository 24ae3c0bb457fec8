"""Grid hashing for close-pair search."""

import itertools
import math
from typing import Dict, List, Optional, Tuple

import numpy as np

from cclt.geometry import TOLERANCE, pairwise_lengths, periodic_difference, within_reach


class SpaceHash:
    """Buckets points into cubic cells of side ``2r``.

    Any pair within reach lies in the same or an adjacent cell, so
    ``close_pairs`` only compares neighbouring buckets. With ``period`` set the
    points live on the torus ``[0, period)^d`` and cells wrap around.
    """

    def __init__(self, points: np.ndarray, r: float, period: Optional[float] = None):
        self.points = np.asarray(points, dtype=float)
        self.r = r
        self.period = period
        self.dimension = self.points.shape[1] if self.points.ndim == 2 else 1
        self.div = 2 * (r + TOLERANCE)
        self.wrap: Optional[int] = None
        if period is not None:
            # Too few cells per axis would make wrapped neighbours coincide.
            cells = int(math.floor(period / self.div))
            if cells >= 3:
                self.wrap = cells
                self.div = period / cells
        self.cells: Dict[Tuple[int, ...], List[int]] = {}
        if len(self.points):
            keys = np.floor(self.points / self.div).astype(np.int64)
            if self.wrap is not None:
                keys %= self.wrap
            for i, key in enumerate(map(tuple, keys)):
                self.cells.setdefault(key, []).append(i)

    def _difference(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if self.period is None:
            return b - a
        return periodic_difference(a, b, self.period)

    def _neighbour_keys(self, key: Tuple[int, ...]):
        for step in itertools.product((-1, 0, 1), repeat=self.dimension):
            other = tuple(k + s for k, s in zip(key, step))
            if self.wrap is not None:
                other = tuple(o % self.wrap for o in other)
            yield other

    def close_pairs(self) -> List[Tuple[int, int]]:
        """All index pairs ``i < j`` within reach, sorted."""
        return [pair for pair, _ in self.close_pairs_with_displacement()]

    def close_pairs_with_displacement(self) -> List[Tuple[Tuple[int, int], np.ndarray]]:
        if self.period is not None and self.wrap is None:
            return self._all_pairs()
        found = []
        for key, members in self.cells.items():
            members = np.asarray(members)
            candidates = sorted({j for other in self._neighbour_keys(key) for j in self.cells.get(other, [])})
            if not candidates:
                continue
            candidates = np.asarray(candidates)
            for i in members:
                later = candidates[candidates > i]
                if not later.size:
                    continue
                deltas = self._difference(self.points[i], self.points[later])
                close = within_reach(pairwise_lengths(deltas), self.r)
                for j, delta in zip(later[close], deltas[close]):
                    found.append(((int(i), int(j)), delta))
        found.sort(key=lambda item: item[0])
        return found

    def _all_pairs(self):
        found = []
        for i in range(len(self.points) - 1):
            later = np.arange(i + 1, len(self.points))
            deltas = self._difference(self.points[i], self.points[later])
            close = within_reach(pairwise_lengths(deltas), self.r)
            for j, delta in zip(later[close], deltas[close]):
                found.append(((i, int(j)), delta))
        return found
