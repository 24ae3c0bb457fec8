"""Čech complex construction."""

import logging
from typing import Dict, List, Optional, Set

from cclt.data_structs import SimplicialComplex, SpaceHash
from cclt.geometry import simplex_in_cech
from cclt.point_process import PointCloud

logger = logging.getLogger(__name__)


def build_cech(cloud: PointCloud, r: float, k_max: Optional[int] = None) -> SimplicialComplex:
    """All simplices of C(cloud, r) up to dimension ``k_max`` (default: d).

    Edges come from the spatial hash. A k-simplex is proposed only by
    extending a (k-1)-simplex with a common neighbour of larger index, and is
    tested only if all of its facets are already present. Above d + 1
    vertices no ball test is needed: the balls meet as soon as every d + 1 of
    them do, and those subsets all sit inside facets that passed.
    """
    if k_max is None:
        k_max = cloud.dimension
    if k_max < 1:
        raise ValueError(f"k_max must be at least 1, got {k_max}.")
    if not r > 0:
        raise ValueError(f"Radius must be positive, got {r}.")

    complex_ = SimplicialComplex(k_max, len(cloud))
    if len(cloud) < 2:
        return complex_

    neighbours: Dict[int, Set[int]] = {i: set() for i in range(len(cloud))}
    for i, j in SpaceHash(cloud.points, r).close_pairs():
        neighbours[i].add(j)
        neighbours[j].add(i)
        complex_.add((i, j))

    faces = set(complex_.simplices[1])
    for k in range(2, k_max + 1):
        found: List[tuple] = []
        for simplex in complex_.simplices[k - 1]:
            common = set.intersection(*(neighbours[v] for v in simplex))
            for v in sorted(u for u in common if u > simplex[-1]):
                candidate = simplex + (v,)
                if not all(candidate[:i] + candidate[i + 1:] in faces for i in range(k + 1)):
                    continue
                if k > cloud.dimension or simplex_in_cech(cloud.points[list(candidate)], r):
                    found.append(candidate)
        for simplex in found:
            complex_.add(simplex)
        faces = set(found)
        logger.debug("dimension %d: %d simplices", k, len(found))
        if not found:
            break
    return complex_


def euler_characteristic(complex_: SimplicialComplex) -> int:
    return sum((-1) ** k * complex_.count(k) for k in complex_.simplices)
