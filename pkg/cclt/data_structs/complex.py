"""Simplicial complex container."""

from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Tuple

Simplex = Tuple[int, ...]


@dataclass
class SimplicialComplex:
    """Simplices by dimension, each a strictly increasing vertex tuple.

    Vertices are ``0..vertex_count-1`` and are stored as 0-simplices.
    """

    dimension_cap: int
    vertex_count: int = 0
    simplices: Dict[int, List[Simplex]] = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension_cap < 0:
            raise ValueError(f"dimension_cap must be nonnegative, got {self.dimension_cap}.")
        self.simplices = {int(k): [tuple(s) for s in v] for k, v in self.simplices.items()}
        self.simplices[0] = [(i,) for i in range(self.vertex_count)]
        for k in range(1, self.dimension_cap + 1):
            self.simplices.setdefault(k, [])
        self._index: Dict[int, Dict[Simplex, int]] = {}

    def count(self, k: int) -> int:
        return len(self.simplices.get(k, []))

    def index_of(self, k: int) -> Dict[Simplex, int]:
        """Frozen simplex-to-row map for dimension k, built once."""
        if k not in self._index:
            self._index[k] = {s: i for i, s in enumerate(self.simplices.get(k, []))}
        return self._index[k]

    def add(self, simplex: Simplex):
        k = len(simplex) - 1
        if k > self.dimension_cap:
            raise ValueError(f"Simplex {simplex} exceeds dimension cap {self.dimension_cap}.")
        if k in self._index:
            raise ValueError(f"Dimension {k} is frozen.")
        self.simplices.setdefault(k, []).append(tuple(simplex))

    def __contains__(self, simplex: Simplex) -> bool:
        return tuple(simplex) in self.index_of(len(simplex) - 1)

    def is_downward_closed(self) -> bool:
        for k in range(1, self.dimension_cap + 1):
            for simplex in self.simplices.get(k, []):
                if any(simplex[i] >= simplex[i + 1] for i in range(k)):
                    return False
                if any(face not in self for face in combinations(simplex, k)):
                    return False
            if len(set(self.simplices.get(k, []))) != self.count(k):
                return False
        return True

    def issubset(self, other: "SimplicialComplex") -> bool:
        return all(
            set(self.simplices.get(k, [])) <= set(other.simplices.get(k, []))
            for k in self.simplices
        )

    def to_dict(self) -> dict:
        return {
            "dimension_cap": self.dimension_cap,
            "vertex_count": self.vertex_count,
            "simplices": {str(k): [list(s) for s in v] for k, v in sorted(self.simplices.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimplicialComplex":
        return cls(
            data["dimension_cap"],
            data["vertex_count"],
            {int(k): [tuple(s) for s in v] for k, v in data["simplices"].items()},
        )
