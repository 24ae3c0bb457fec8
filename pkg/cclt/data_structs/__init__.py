"""Core containers: complexes, disjoint sets and the spatial hash."""

from cclt.data_structs.complex import Simplex, SimplicialComplex
from cclt.data_structs.spacehash import SpaceHash
from cclt.data_structs.union_find import UnionFind, WindingUnionFind

__all__ = [
    "Simplex",
    "SimplicialComplex",
    "SpaceHash",
    "UnionFind",
    "WindingUnionFind",
]
