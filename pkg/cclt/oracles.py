"""Slow, independent reference implementations used to cross-check the fast paths.

Only the enclosing-ball predicate is shared with the fast code. Subsets are
enumerated exhaustively, homology comes from dense elimination and component
counts from networkx.
"""

from itertools import combinations
from typing import Dict, List, Tuple

import networkx as nx
import numpy as np

from cclt.geometry import simplex_in_cech


def brute_force_cech(points: np.ndarray, r: float, k_max: int) -> Dict[int, List[Tuple[int, ...]]]:
    """Every vertex subset of size <= k_max + 1 whose r-balls meet, in lexicographic order."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    simplices: Dict[int, List[Tuple[int, ...]]] = {0: [(i,) for i in range(n)]}
    for k in range(1, k_max + 1):
        simplices[k] = [
            subset for subset in combinations(range(n), k + 1)
            if simplex_in_cech(points[list(subset)], r)
        ]
    return simplices


def _dense_rank_gf2(matrix: np.ndarray) -> int:
    m = (np.asarray(matrix, dtype=np.uint8) % 2).copy()
    rank = 0
    rows, cols = m.shape
    for col in range(cols):
        pivot = next((row for row in range(rank, rows) if m[row, col]), None)
        if pivot is None:
            continue
        m[[rank, pivot]] = m[[pivot, rank]]
        for row in range(rows):
            if row != rank and m[row, col]:
                m[row] ^= m[rank]
        rank += 1
        if rank == rows:
            break
    return rank


def dense_betti(simplices: Dict[int, List[Tuple[int, ...]]], k_cap: int) -> List[int]:
    """Betti numbers from explicit 0/1 boundary matrices."""
    ranks = {}
    for k in range(1, k_cap + 2):
        rows = {s: i for i, s in enumerate(simplices.get(k - 1, []))}
        columns = simplices.get(k, [])
        matrix = np.zeros((len(rows), len(columns)), dtype=np.uint8)
        for j, simplex in enumerate(columns):
            for face in combinations(simplex, k):
                matrix[rows[face], j] = 1
        ranks[k] = _dense_rank_gf2(matrix) if matrix.size else 0
    return [
        len(simplices.get(k, [])) - ranks.get(k, 0) - ranks.get(k + 1, 0)
        for k in range(k_cap + 1)
    ]


def component_count(points: np.ndarray, r: float) -> int:
    """Connected components of the graph joining points at distance <= 2r."""
    points = np.asarray(points, dtype=float)
    graph = nx.Graph()
    graph.add_nodes_from(range(len(points)))
    for i in range(len(points)):
        gaps = np.linalg.norm(points[i + 1:] - points[i], axis=1)
        graph.add_edges_from((i, i + 1 + int(j)) for j in np.flatnonzero(gaps <= 2 * r))
    return nx.number_connected_components(graph)


def limit_delta_component_count(lam: float, r: float, halfwidth: float, replications: int,
                                seed: int, dimension: int = 2) -> Tuple[float, float]:
    """Mean and standard error of D_0 for the component count, from a plain numpy generator."""
    generator = np.random.default_rng(seed)
    values = np.empty(replications)
    for i in range(replications):
        count = generator.poisson(lam * (2 * halfwidth) ** dimension)
        points = generator.uniform(-halfwidth, halfwidth, size=(count, dimension))
        with_origin = np.vstack([points, np.zeros((1, dimension))])
        values[i] = component_count(with_origin, r) - component_count(points, r)
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(replications))
