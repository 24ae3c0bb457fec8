"""Translation-invariant functionals H and their add-one costs D_x."""

import logging
import math
from dataclasses import dataclass
from typing import List

import numpy as np
from dataclasses_json import DataClassJsonMixin

from cclt.cech import build_cech
from cclt.data_structs import SpaceHash, UnionFind
from cclt.geometry import Box, Point, PointLike, as_array
from cclt.homology import betti_numbers
from cclt.point_process import DensityGrid, PointCloud, RngStream, sample_inhomogeneous, scale_cloud

logger = logging.getLogger(__name__)

KINDS = ("betti_k", "component_count", "edge_count")


@dataclass
class FunctionalSpec(DataClassJsonMixin):
    """Which functional to evaluate, at connection radius ``r``."""

    kind: str = "betti_k"
    k: int = 0
    r: float = 0.3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"Unknown functional kind {self.kind!r}; expected one of {KINDS}.")
        if not (isinstance(self.r, (int, float)) and math.isfinite(self.r) and self.r > 0):
            raise ValueError(f"Connection radius must be positive, got {self.r}.")
        if self.kind == "betti_k" and self.k < 0:
            raise ValueError(f"Betti index must be nonnegative, got {self.k}.")

    def validate(self, dimension: int):
        if self.kind == "betti_k" and self.k >= dimension:
            raise ValueError(
                f"beta_{self.k} vanishes identically in dimension {dimension}; use k <= {dimension - 1}."
            )

    def with_radius(self, r: float) -> "FunctionalSpec":
        return FunctionalSpec(self.kind, self.k, r)

    @property
    def label(self) -> str:
        return f"beta_{self.k}" if self.kind == "betti_k" else self.kind


@dataclass
class AddOneCostRecord:
    location: Point
    window: Box
    value: float


def evaluate(spec: FunctionalSpec, cloud: PointCloud) -> int:
    spec.validate(cloud.dimension)
    if spec.kind == "edge_count":
        return len(SpaceHash(cloud.points, spec.r).close_pairs())
    if spec.kind == "component_count":
        forest = UnionFind(len(cloud))
        for i, j in SpaceHash(cloud.points, spec.r).close_pairs():
            forest.union(i, j)
        return forest.components
    complex_ = build_cech(cloud, spec.r, spec.k + 1)
    return betti_numbers(complex_, spec.k)[spec.k]


def add_one_cost(spec: FunctionalSpec, cloud: PointCloud, x: PointLike, window: Box) -> AddOneCostRecord:
    """H(cloud|W ∪ {x}) - H(cloud|W), restricting to the window first."""
    location = as_array(x)
    if not window.contains(location):
        raise ValueError(f"Location {tuple(location)} lies outside the window.")
    restricted = cloud.restrict(window)
    value = evaluate(spec, restricted.with_point(location)) - evaluate(spec, restricted)
    return AddOneCostRecord(Point(tuple(location)), window, value)


def translation_invariance_check(spec: FunctionalSpec, cloud: PointCloud, shift: PointLike) -> bool:
    return evaluate(spec, cloud) == evaluate(spec, cloud.translate(shift))


def insertion_telescope(spec: FunctionalSpec, cloud: PointCloud) -> int:
    """H(cloud) rebuilt from H(empty) plus add-one costs in index order."""
    empty = PointCloud(cloud.dimension)
    total = evaluate(spec, empty)
    if not len(cloud):
        return total
    lower = cloud.points.min(axis=0) - 1
    window = Box(Point(tuple(lower)), tuple(cloud.points.max(axis=0) - lower + 1))
    for i in range(len(cloud)):
        total += add_one_cost(spec, cloud.head(i), cloud.points[i], window).value
    return total


@dataclass
class PoincareCheck(DataClassJsonMixin):
    variance: float
    variance_se: float
    bound: float
    bound_se: float
    replications: int

    @property
    def holds(self) -> bool:
        """Variance does not exceed the bound beyond three combined standard errors."""
        return self.variance <= self.bound + 3 * math.hypot(self.variance_se, self.bound_se)


def poincare_check(spec: FunctionalSpec, f: DensityGrid, n: float, replications: int,
                   rng: RngStream, locations_per_cell: int = 1) -> PoincareCheck:
    """Monte Carlo comparison of Var[H(P̃_n)] with ∫E|D_x(P̃_n)|² f̃(x)dx.

    P̃_n = n^{1/d} P(nf) has intensity f(x / n^{1/d}); the integral is
    estimated per grid cell by averaging D_x² at uniform locations in it.
    """
    if replications < 2:
        raise ValueError("Need at least two replications.")
    scale = n ** (1 / f.dimension)
    window = f.support.scaled(scale)
    cell_sides = f.cell_sides * scale
    values: List[float] = []
    bounds: List[float] = []
    for i in range(replications):
        stream = rng.substream(i)
        cloud = scale_cloud(sample_inhomogeneous(f.scaled(n), stream), scale)
        values.append(evaluate(spec, cloud))
        base = values[-1]
        integral = 0.0
        for lower, value in zip(f.cell_lowers() * scale, f.values.ravel()):
            if value <= 0:
                continue
            squares = []
            for _ in range(locations_per_cell):
                x = lower + stream.generator.random(f.dimension) * cell_sides
                squares.append((evaluate(spec, cloud.with_point(x)) - base) ** 2)
            integral += value * float(np.prod(cell_sides)) * float(np.mean(squares))
        bounds.append(integral)
    values_arr, bounds_arr = np.asarray(values, dtype=float), np.asarray(bounds)
    variance = float(values_arr.var(ddof=1))
    check = PoincareCheck(
        variance=variance,
        variance_se=variance * math.sqrt(2 / (replications - 1)),
        bound=float(bounds_arr.mean()),
        bound_se=float(bounds_arr.std(ddof=1) / math.sqrt(replications)),
        replications=replications,
    )
    logger.info("Poincare check for %s: variance %.4g vs bound %.4g", spec.label, check.variance, check.bound)
    return check
