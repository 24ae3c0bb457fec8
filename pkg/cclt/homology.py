"""Betti numbers over the two-element field.

Boundary columns are bit-packed into Python integers, so adding two columns
is an XOR and the lowest entry is the highest set bit.
"""

from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Tuple

from cclt.data_structs import SimplicialComplex, UnionFind


@dataclass(frozen=True)
class BettiVector:
    values: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        if any(v < 0 for v in self.values):
            raise ValueError(f"Betti numbers must be nonnegative, got {self.values}.")

    def __getitem__(self, k: int) -> int:
        return self.values[k]

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


@dataclass
class BoundaryMatrix:
    """Mod-2 boundary maps; ``columns[k][j]`` is the boundary of the j-th k-simplex."""

    complex_: SimplicialComplex
    columns: Dict[int, List[int]] = field(default_factory=dict)

    def __post_init__(self):
        for k in range(1, self.complex_.dimension_cap + 1):
            rows = self.complex_.index_of(k - 1)
            packed = []
            for simplex in self.complex_.simplices.get(k, []):
                column = 0
                for face in combinations(simplex, k):
                    column |= 1 << rows[face]
                packed.append(column)
            self.columns[k] = packed
        self._ranks: Dict[int, int] = {}

    def rank(self, k: int) -> int:
        """Rank of the k-th boundary map; zero outside ``1..dimension_cap``."""
        if k < 1 or k > self.complex_.dimension_cap:
            return 0
        if k not in self._ranks:
            self._ranks[k] = reduced_rank(self.columns[k])
        return self._ranks[k]

    def composes_to_zero(self, k: int) -> bool:
        """The boundary of every (k+1)-column's boundary vanishes."""
        if k < 1 or k + 1 > self.complex_.dimension_cap:
            return True
        lower = self.columns[k]
        for column in self.columns[k + 1]:
            total = 0
            while column:
                low = column.bit_length() - 1
                total ^= lower[low]
                column ^= 1 << low
            if total:
                return False
        return True


def reduced_rank(columns: List[int]) -> int:
    """Left-to-right column reduction with low-entry pivots."""
    pivots: Dict[int, int] = {}
    rank = 0
    for column in columns:
        while column:
            low = column.bit_length() - 1
            pivot = pivots.get(low)
            if pivot is None:
                pivots[low] = column
                rank += 1
                break
            column ^= pivot
    return rank


def betti_numbers(complex_: SimplicialComplex, k_cap: int) -> BettiVector:
    """β_0..β_k_cap; needs simplices through dimension k_cap + 1."""
    if k_cap < 0 or k_cap > complex_.dimension_cap - 1:
        raise ValueError(
            f"k_cap={k_cap} needs a complex capped at dimension {k_cap + 1}, "
            f"this one is capped at {complex_.dimension_cap}."
        )
    boundary = BoundaryMatrix(complex_)
    return BettiVector(tuple(
        complex_.count(k) - boundary.rank(k) - boundary.rank(k + 1)
        for k in range(k_cap + 1)
    ))


def betti0_unionfind(complex_: SimplicialComplex) -> int:
    """Connected components of the 1-skeleton."""
    forest = UnionFind(complex_.vertex_count)
    for i, j in complex_.simplices.get(1, []):
        forest.union(i, j)
    return forest.components
