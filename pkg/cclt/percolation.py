"""Estimate of the occupied-component percolation radius r_c.

Each replication draws one unit-intensity sample on the torus ``[0, side)^d``
and finds the smallest radius at which some cluster of the union of r-balls
wraps around along the first axis. The spanning curve over a grid of radii is
then the empirical distribution of those thresholds.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from dataclasses_json import DataClassJsonMixin

from cclt.data_structs import SpaceHash, WindingUnionFind
from cclt.geometry import Box, pairwise_lengths
from cclt.point_process import RngStream, sample_homogeneous
from cclt.runner import parallel_map
from cclt.stats import binomial_standard_error

logger = logging.getLogger(__name__)

DEFAULT_RADII = tuple(np.round(np.linspace(0.2, 1.0, 17), 4))
BISECTION_STEPS = 30
Z_95 = 1.959963984540054


def spanning_threshold(side: float, dimension: int, rng: RngStream, r_max: float) -> float:
    """Smallest r at which U_r of the sample wraps along axis 0 (inf above ``r_max``)."""
    cloud = sample_homogeneous(1.0, Box.cube(side, dimension), rng)
    pairs = SpaceHash(cloud.points, r_max, period=side).close_pairs_with_displacement()
    if not pairs:
        return math.inf
    lengths = pairwise_lengths(np.stack([delta for _, delta in pairs]))
    forest = WindingUnionFind(len(cloud), dimension, side)
    for position in np.argsort(lengths, kind="stable"):
        (i, j), delta = pairs[position]
        forest.union(i, j, delta)
        if forest.wraps[forest.find(i)][0]:
            return float(lengths[position] / 2)
    return math.inf


@dataclass
class SpanningCurve(DataClassJsonMixin):
    side: float
    radii: List[float]
    fractions: List[float]
    std_errors: List[float]
    estimate: Optional[float]
    band: List[Optional[float]]
    # Samples that never wrapped below the largest grid radius.
    unspanned: int = 0

    @property
    def monotone(self) -> bool:
        """Nondecreasing in r up to two standard errors per grid point."""
        return all(
            b >= a - 2 * max(sa, sb)
            for a, b, sa, sb in zip(self.fractions, self.fractions[1:], self.std_errors, self.std_errors[1:])
        )


def _fraction(thresholds: np.ndarray, r: float) -> float:
    return float(np.mean(thresholds <= r))


def _crossing(thresholds: np.ndarray, radii: Sequence[float], level: float) -> Optional[float]:
    """Radius where the spanning fraction first reaches ``level``: grid bracket, then bisection."""
    fractions = [_fraction(thresholds, r) for r in radii]
    above = [i for i, p in enumerate(fractions) if p >= level]
    if not above or above[0] == 0:
        return None
    low, high = radii[above[0] - 1], radii[above[0]]
    for _ in range(BISECTION_STEPS):
        middle = (low + high) / 2
        if _fraction(thresholds, middle) >= level:
            high = middle
        else:
            low = middle
    return (low + high) / 2


def spanning_curve(side: float, dimension: int, replications: int, rng: RngStream,
                   radii: Sequence[float] = DEFAULT_RADII, threads: Optional[int] = 1) -> SpanningCurve:
    radii = sorted(float(r) for r in radii)
    thresholds = np.asarray(parallel_map(
        lambda i: spanning_threshold(side, dimension, rng.substream(i), radii[-1]),
        range(replications), threads,
    ))
    fractions = [_fraction(thresholds, r) for r in radii]
    errors = [binomial_standard_error(p, replications) for p in fractions]
    half_band = Z_95 * math.sqrt(0.25 / replications)
    estimate = _crossing(thresholds, radii, 0.5)
    band = [_crossing(thresholds, radii, 0.5 - half_band), _crossing(thresholds, radii, 0.5 + half_band)]
    if estimate is None:
        logger.warning("Spanning fraction never crosses 1/2 on the grid for side %g.", side)
    unspanned = int(np.sum(np.isinf(thresholds)))
    return SpanningCurve(side, radii, fractions, errors, estimate, band, unspanned)


@dataclass
class PercolationEstimate(DataClassJsonMixin):
    dimension: int
    radius: Optional[float]
    band: List[Optional[float]]
    curves: List[SpanningCurve]

    @property
    def relative_drift(self) -> Optional[float]:
        """Relative difference between the smallest and largest torus estimates."""
        estimates = [c.estimate for c in self.curves]
        if len(estimates) < 2 or None in estimates:
            return None
        return abs(estimates[-1] - estimates[0]) / estimates[-1]


def estimate_percolation_radius(d: int, sizes: Sequence[float], replications: int, rng: RngStream,
                                radii: Sequence[float] = DEFAULT_RADII,
                                threads: Optional[int] = 1) -> PercolationEstimate:
    """r̂_c from the largest torus, with finite-size drift over ``sizes``."""
    if d < 2:
        raise ValueError("Continuum percolation needs d >= 2; r_c is infinite on the line.")
    if not sizes or replications < 1:
        raise ValueError("Need at least one torus size and one replication.")
    curves = [
        spanning_curve(side, d, replications, rng.substream(position), radii, threads)
        for position, side in enumerate(sorted(sizes))
    ]
    largest = curves[-1]
    for curve in curves:
        logger.info("Torus side %g: r_c estimate %s", curve.side, curve.estimate)
    return PercolationEstimate(d, largest.estimate, largest.band, curves)
