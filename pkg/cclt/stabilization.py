"""Empirical probes of weak and strong stabilization.

A trace draws one homogeneous sample on the largest window and restricts it
to nested cubes centred at the origin, recording D_0 on each. The settle
radius is the "last change" over those windows.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
from dataclasses_json import DataClassJsonMixin

from cclt.data_structs import SpaceHash, UnionFind
from cclt.functionals import FunctionalSpec, add_one_cost, evaluate
from cclt.geometry import Box, Point
from cclt.point_process import (
    DensityGrid,
    PointCloud,
    RngStream,
    sample_binomial,
    sample_homogeneous,
    sample_inhomogeneous,
    scale_cloud,
)
from cclt.runner import parallel_map

logger = logging.getLogger(__name__)

# Window half-width used as a stand-in for the infinite-volume limit.
LIMIT_HALFWIDTH = 4.0


@dataclass
class StabilizationTrace:
    lam: float
    halfwidths: List[float]
    d0_values: List[float]
    settle_radius: Optional[float]
    dimension: int = 2
    cloud: Optional[PointCloud] = field(default=None, repr=False)

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.halfwidths, self.halfwidths[1:])):
            raise ValueError("Window half-widths must be strictly increasing.")
        if len(self.halfwidths) != len(self.d0_values):
            raise ValueError("Need one D_0 value per window.")

    @property
    def window_sizes(self) -> List[float]:
        """Cube volumes (2h)^d."""
        return [(2 * h) ** self.dimension for h in self.halfwidths]

    @property
    def settled(self) -> bool:
        return self.settle_radius is not None

    @property
    def final_value(self) -> float:
        return self.d0_values[-1]

    def rows(self, trace_index: int = 0) -> List[dict]:
        return [
            {"trace": trace_index, "halfwidth": h, "volume": v, "d0": d0}
            for h, v, d0 in zip(self.halfwidths, self.window_sizes, self.d0_values)
        ]


def settled_by(halfwidths: Sequence[float], values: Sequence[float]) -> Optional[float]:
    """Smallest half-width from which every value equals the last one.

    None when the last window still changed the value.
    """
    if not values:
        return None
    final = values[-1]
    if len(values) > 1 and values[-2] != final:
        return None
    index = len(values) - 1
    while index > 0 and values[index - 1] == final:
        index -= 1
    return halfwidths[index]


def trace_add_one_cost(spec: FunctionalSpec, lam: float, max_halfwidth: float, steps: int,
                       rng: RngStream, dimension: int = 2) -> StabilizationTrace:
    if lam < 0:
        raise ValueError(f"Intensity must be nonnegative, got {lam}.")
    if steps < 1 or not max_halfwidth > 0:
        raise ValueError("Need at least one window of positive size.")
    spec.validate(dimension)
    cloud = sample_homogeneous(lam, Box.centered(max_halfwidth, dimension), rng)
    origin = Point.origin(dimension)
    halfwidths = [max_halfwidth * (i + 1) / steps for i in range(steps)]
    values = [
        add_one_cost(spec, cloud, origin, Box.centered(h, dimension)).value
        for h in halfwidths
    ]
    settle = settled_by(halfwidths, values)
    if settle is None:
        logger.info("Trace unsettled at half-width %.3g (last values %s)", max_halfwidth, values[-2:])
    return StabilizationTrace(lam, halfwidths, values, settle, dimension, cloud)


def settle_survival(traces: Sequence[StabilizationTrace], ts: Sequence[float]) -> List[float]:
    """Empirical P(settle radius > t); unsettled traces exceed every t."""
    if not traces:
        return [0.0 for _ in ts]
    radii = [math.inf if t.settle_radius is None else t.settle_radius for t in traces]
    return [sum(r > t for r in radii) / len(radii) for t in ts]


class DeltaEstimate(NamedTuple):
    mean: float
    std_error: float


def limit_delta_samples(spec: FunctionalSpec, lam: float, replications: int, rng: RngStream,
                        dimension: int = 2, halfwidth: float = LIMIT_HALFWIDTH,
                        threads: Optional[int] = 1) -> np.ndarray:
    """D_0 on independent homogeneous samples in ``[-halfwidth, halfwidth)^d``."""
    spec.validate(dimension)
    window = Box.centered(halfwidth, dimension)
    origin = Point.origin(dimension)

    def one(index: int) -> float:
        cloud = sample_homogeneous(lam, window, rng.substream(index))
        return add_one_cost(spec, cloud, origin, window).value

    return np.asarray(parallel_map(one, range(replications), threads), dtype=float)


def estimate_limit_delta(spec: FunctionalSpec, lam: float, replications: int, rng: RngStream,
                         dimension: int = 2, halfwidth: float = LIMIT_HALFWIDTH,
                         threads: Optional[int] = 1) -> DeltaEstimate:
    if replications < 2:
        raise ValueError("Need at least two replications for a standard error.")
    samples = limit_delta_samples(spec, lam, replications, rng, dimension, halfwidth, threads)
    return DeltaEstimate(float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(replications)))


@dataclass
class NondegeneracyReport(DataClassJsonMixin):
    distinct_values: int
    variance: float
    most_common_share: float

    @property
    def nondegenerate(self) -> bool:
        return self.distinct_values > 1


def nondegeneracy(samples: Sequence[float]) -> NondegeneracyReport:
    """How far the empirical law of D_0 is from a point mass."""
    values, counts = np.unique(np.asarray(samples, dtype=float), return_counts=True)
    variance = float(np.var(samples, ddof=1)) if len(samples) > 1 else 0.0
    return NondegeneracyReport(int(values.size), variance, float(counts.max() / counts.sum()) if counts.size else 1.0)


@dataclass
class MomentRow:
    n: float
    location: Point
    halfwidth: float
    costs: np.ndarray = field(repr=False)
    window_values: np.ndarray = field(repr=False)

    def norm(self, q: float) -> float:
        """(E|D_y|^q)^{1/q}, the normalized q-norm."""
        if not self.costs.size:
            return 0.0
        return float(np.mean(np.abs(self.costs) ** q) ** (1 / q))

    def moment(self, q: float) -> float:
        return float(np.mean(np.abs(self.costs) ** q)) if self.costs.size else 0.0

    def window_moment(self, q: float) -> float:
        """E|H(P|_{y+W})|^q, the locally bounded moments quantity."""
        return float(np.mean(np.abs(self.window_values) ** q)) if self.window_values.size else 0.0


@dataclass
class MomentTable:
    p: float
    rows: List[MomentRow]

    @property
    def sup_moment(self) -> float:
        return max((row.moment(self.p) for row in self.rows), default=0.0)

    @property
    def sup_window_moment(self) -> float:
        return max((row.window_moment(self.p) for row in self.rows), default=0.0)

    def to_dict(self) -> Dict[str, object]:
        return {
            "p": self.p,
            "sup_moment": self.sup_moment,
            "sup_window_moment": self.sup_window_moment,
            "rows": [
                {
                    "n": row.n,
                    "location": list(row.location.coords),
                    "halfwidth": row.halfwidth,
                    "moment": row.moment(self.p),
                    "window_moment": row.window_moment(self.p),
                }
                for row in self.rows
            ],
        }


def moment_diagnostic(spec: FunctionalSpec, f: DensityGrid, n_values: Sequence[float], p: float,
                      rng: RngStream, locations: int = 3, replications: int = 20,
                      halfwidths: Sequence[float] = (1.0, 2.0)) -> MomentTable:
    """p-th moments of |D_y(P̃_n|_W)| over random y drawn from f and cubes W around y.

    P̃_n is n^{1/d} P(nf). The estimates are reported, not asserted.
    """
    if not p > 2:
        raise ValueError(f"The moment exponent must exceed 2, got {p}.")
    spec.validate(f.dimension)
    d = f.dimension
    rows: List[MomentRow] = []
    if f.total_mass <= 0:
        logger.info("Empty density: every moment is 0.")
        return MomentTable(p, rows)
    for position, n in enumerate(n_values):
        scale = n ** (1 / d)
        stream = rng.substream(position)
        ys = scale_cloud(sample_binomial(f, locations, stream.substream(0)), scale).points
        costs = np.zeros((len(ys), len(halfwidths), replications))
        window_values = np.zeros_like(costs)
        for rep in range(replications):
            cloud = scale_cloud(sample_inhomogeneous(f.scaled(n), stream.substream(rep + 1)), scale)
            for i, y in enumerate(ys):
                for j, h in enumerate(halfwidths):
                    window = Box(Point(tuple(y - h)), (2 * h,) * d)
                    costs[i, j, rep] = add_one_cost(spec, cloud, y, window).value
                    window_values[i, j, rep] = evaluate(spec, cloud.restrict(window))
        for i, y in enumerate(ys):
            for j, h in enumerate(halfwidths):
                rows.append(MomentRow(n, Point(tuple(y)), h, costs[i, j], window_values[i, j]))
    table = MomentTable(p, rows)
    logger.info("Moment diagnostic p=%g: sup E|D|^p=%.4g, sup E|H_W|^p=%.4g",
                p, table.sup_moment, table.sup_window_moment)
    return table


@dataclass
class ProbeResult(DataClassJsonMixin):
    settle_radius: float
    cluster_extent: float
    baseline: float
    perturbed: float

    @property
    def passed(self) -> bool:
        return self.baseline == self.perturbed


def _origin_cluster(cloud: PointCloud, r: float) -> np.ndarray:
    """Points of the origin's cluster in U_r(cloud ∪ {0})."""
    points = np.vstack([np.zeros((1, cloud.dimension)), cloud.points])
    forest = UnionFind(len(points))
    for i, j in SpaceHash(points, r).close_pairs():
        forest.union(i, j)
    root = forest.find(0)
    members = [i for i in range(len(points)) if forest.find(i) == root]
    return points[members]


def strong_stabilization_probe(spec: FunctionalSpec, trace: StabilizationTrace, rng: RngStream,
                               injected: int = 10) -> Optional[ProbeResult]:
    """Re-evaluate D_0 after points are added just outside the settle radius.

    ``injected`` points are drawn in the shell between the settle radius and
    settle radius + 2r (cut at the largest window) and D_0 is recomputed on
    the trace's largest window. The extent of the origin's cluster is
    reported next to the verdict. Returns None for unsettled traces.
    """
    if not trace.settled or trace.cloud is None:
        return None
    d = trace.cloud.dimension
    settle = float(trace.settle_radius)
    max_halfwidth = trace.halfwidths[-1]
    cluster = _origin_cluster(trace.cloud.restrict(Box.centered(max_halfwidth, d)), spec.r)
    extent = float(np.sqrt((cluster ** 2).sum(axis=1)).max())

    low = float(np.nextafter(settle, math.inf))
    high = min(settle + 2 * spec.r, max_halfwidth)
    generator = rng.generator
    directions = generator.normal(size=(injected, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = low + generator.random(injected) * max(high - low, 0.0)
    extra = PointCloud(d, directions * radii[:, None])

    window = Box.centered(max_halfwidth, d)
    perturbed = add_one_cost(spec, trace.cloud.union(extra), Point.origin(d), window).value
    result = ProbeResult(settle, extent, trace.final_value, perturbed)
    if not result.passed:
        logger.info(
            "D_0 changed under injection: %s -> %s (settle %.3g, cluster extent %.3g)",
            result.baseline, result.perturbed, result.settle_radius, result.cluster_extent,
        )
    return result
