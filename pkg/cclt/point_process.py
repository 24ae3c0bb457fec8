"""Seeded samplers for binomial, Poisson and coupled point processes.

Densities are piecewise constant on a box grid, which makes exact sampling
and the coupling band mass closed-form. Every sampler takes an ``RngStream``;
a stream must not be shared between concurrent samplers.
"""

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterator, List, Sequence, Tuple, Union

import numpy as np

from cclt.geometry import Box, Point, PointLike, as_array


@dataclass
class RngStream:
    """Counter-based random stream keyed by ``(master_seed, stream_index)``.

    The same pair always yields the same sequence; distinct pairs are
    independent. ``substream`` derives further independent streams.
    """

    master_seed: int
    stream_index: int = 0
    path: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.stream_index < 0:
            raise ValueError(f"stream_index must be nonnegative, got {self.stream_index}.")
        self.master_seed = int(self.master_seed) % 2**64

    @cached_property
    def generator(self) -> np.random.Generator:
        seed = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_index,) + self.path)
        return np.random.Generator(np.random.Philox(seed))

    def substream(self, index: int) -> "RngStream":
        return RngStream(self.master_seed, self.stream_index, self.path + (index,))


@dataclass(eq=False)
class DensityGrid:
    """Nonnegative piecewise-constant density on a regular grid of a box."""

    support: Box
    cells_per_axis: Tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        self.cells_per_axis = tuple(int(c) for c in self.cells_per_axis)
        if len(self.cells_per_axis) != self.support.dimension:
            raise ValueError("cells_per_axis must have one entry per dimension.")
        if any(c < 1 for c in self.cells_per_axis):
            raise ValueError(f"cells_per_axis must be positive, got {self.cells_per_axis}.")
        values = np.asarray(self.values, dtype=float)
        if values.size != int(np.prod(self.cells_per_axis)):
            raise ValueError(
                f"Expected {int(np.prod(self.cells_per_axis))} density values, got {values.size}."
            )
        values = values.reshape(self.cells_per_axis)
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("Density values must be finite and nonnegative.")
        self.values = values

    @classmethod
    def uniform(cls, support: Box, value: float = 1.0, cells_per_axis: Sequence[int] = ()) -> "DensityGrid":
        cells = tuple(cells_per_axis) or (1,) * support.dimension
        return cls(support, cells, np.full(cells, float(value)))

    @classmethod
    def from_function(cls, function: Callable[[np.ndarray], float], support: Box,
                      cells_per_axis: Sequence[int]) -> "DensityGrid":
        """Project a density onto the grid by its value at cell midpoints."""
        grid = cls.uniform(support, 0.0, cells_per_axis)
        midpoints = grid.cell_lowers() + grid.cell_sides / 2
        values = np.array([function(p) for p in midpoints])
        return cls(support, grid.cells_per_axis, values)

    @property
    def dimension(self) -> int:
        return self.support.dimension

    @property
    def cell_sides(self) -> np.ndarray:
        return np.asarray(self.support.side_lengths) / np.asarray(self.cells_per_axis)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_sides))

    @property
    def masses(self) -> np.ndarray:
        """Per-cell mass, flattened in row-major order."""
        return self.values.ravel() * self.cell_volume

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @property
    def sup(self) -> float:
        """Lambda, the supremum of the density."""
        return float(self.values.max())

    def cell_lowers(self) -> np.ndarray:
        """Lower corners of all cells, row-major, shape ``(cells, d)``."""
        indices = np.array(list(itertools.product(*(range(c) for c in self.cells_per_axis))), dtype=float)
        return self.support.lower + indices * self.cell_sides

    def cell_boxes(self) -> Iterator[Tuple[Box, float]]:
        for lower, value in zip(self.cell_lowers(), self.values.ravel()):
            yield Box(Point(tuple(lower)), tuple(self.cell_sides)), float(value)

    def levels(self) -> List[Tuple[float, float]]:
        """Distinct density levels with the total volume each occupies."""
        volume = {}
        for value in self.values.ravel():
            volume[float(value)] = volume.get(float(value), 0.0) + self.cell_volume
        return sorted(volume.items())

    def scaled(self, factor: float) -> "DensityGrid":
        return DensityGrid(self.support, self.cells_per_axis, self.values * factor)

    def normalized(self) -> "DensityGrid":
        if self.total_mass <= 0:
            raise ValueError("Cannot normalize a density with zero total mass.")
        return self.scaled(1.0 / self.total_mass)

    def same_grid(self, other: "DensityGrid") -> bool:
        return (
            self.support == other.support
            and self.cells_per_axis == other.cells_per_axis
        )

    def to_dict(self) -> dict:
        return {
            "support": {
                "min_corner": list(self.support.min_corner.coords),
                "side_lengths": list(self.support.side_lengths),
            },
            "cells_per_axis": list(self.cells_per_axis),
            "values": [float(v) for v in self.values.ravel()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DensityGrid":
        support = Box(Point(tuple(data["support"]["min_corner"])), tuple(data["support"]["side_lengths"]))
        return cls(support, tuple(data["cells_per_axis"]), np.asarray(data["values"], dtype=float))

    def save(self, path: Union[str, Path]):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "DensityGrid":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(eq=False)
class PointCloud:
    dimension: int
    points: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"Dimension must be positive, got {self.dimension}.")
        if self.points is None:
            self.points = np.empty((0, self.dimension))
        self.points = np.asarray(self.points, dtype=float).reshape(-1, self.dimension)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("Point coordinates must be finite.")

    @classmethod
    def from_points(cls, points: Sequence[PointLike]) -> "PointCloud":
        arrays = [as_array(p) for p in points]
        if not arrays:
            raise ValueError("Cannot infer the dimension of an empty point list.")
        return cls(arrays[0].size, np.stack(arrays))

    def __len__(self) -> int:
        return self.points.shape[0]

    def __iter__(self) -> Iterator[Point]:
        return (Point(tuple(p)) for p in self.points)

    def restrict(self, box: Box) -> "PointCloud":
        return PointCloud(self.dimension, self.points[box.contains(self.points)])

    def translate(self, shift: PointLike) -> "PointCloud":
        return PointCloud(self.dimension, self.points + as_array(shift))

    def with_point(self, point: PointLike) -> "PointCloud":
        return PointCloud(self.dimension, np.vstack([self.points, as_array(point)]))

    def union(self, other: "PointCloud") -> "PointCloud":
        if other.dimension != self.dimension:
            raise ValueError("Cannot join clouds of different dimensions.")
        return PointCloud(self.dimension, np.vstack([self.points, other.points]))

    def head(self, count: int) -> "PointCloud":
        return PointCloud(self.dimension, self.points[:count])

    def same_as(self, other: "PointCloud") -> bool:
        return self.dimension == other.dimension and np.array_equal(self.points, other.points)

    def to_csv(self, path: Union[str, Path]):
        header = [f"x{i}" for i in range(self.dimension)]
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows([repr(float(c)) for c in p] for p in self.points)

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "PointCloud":
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        dimension = len(rows[0])
        return cls(dimension, np.array([[float(c) for c in row] for row in rows[1:]]).reshape(-1, dimension))


def _uniform_in_cells(f: DensityGrid, cells: np.ndarray, generator: np.random.Generator) -> np.ndarray:
    lowers = f.cell_lowers()[cells]
    return lowers + generator.random(lowers.shape) * f.cell_sides


def _iid_points(f: DensityGrid, count: int, generator: np.random.Generator) -> np.ndarray:
    total = f.total_mass
    if total <= 0:
        raise ValueError("The density has zero total mass.")
    cells = generator.choice(f.masses.size, size=count, p=f.masses / total)
    return _uniform_in_cells(f, cells, generator)


def sample_binomial(f: DensityGrid, n: int, rng: RngStream) -> PointCloud:
    """n i.i.d. points from f / ∫f: cell by mass, then uniform inside it."""
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}.")
    return PointCloud(f.dimension, _iid_points(f, int(n), rng.generator))


def sample_poissonized(f: DensityGrid, n: float, rng: RngStream) -> PointCloud:
    """Poisson(n) many i.i.d. points from f / ∫f."""
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}.")
    if f.total_mass <= 0:
        raise ValueError("The density has zero total mass.")
    count = int(rng.generator.poisson(n))
    return PointCloud(f.dimension, _iid_points(f, count, rng.generator))


def sample_poissonized_pair(f: DensityGrid, n: int, rng: RngStream, extra: int = 0) -> Tuple[np.ndarray, int]:
    """One i.i.d. sequence long enough for both the binomial and Poissonized sets.

    Returns the sequence and N ~ Poisson(n); the binomial process is the first
    ``n`` points and the Poissonized one the first ``N``. ``extra`` lengthens
    the sequence beyond ``max(n, N)``.
    """
    count = int(rng.generator.poisson(n))
    points = _iid_points(f, max(int(n), count) + extra, rng.generator)
    return points, count


def sample_homogeneous(lam: float, box: Box, rng: RngStream) -> PointCloud:
    if not lam >= 0:
        raise ValueError(f"Intensity must be nonnegative, got {lam}.")
    count = int(rng.generator.poisson(lam * box.volume))
    points = box.lower + rng.generator.random((count, box.dimension)) * np.asarray(box.side_lengths)
    return PointCloud(box.dimension, points)


def sample_inhomogeneous(intensity: DensityGrid, rng: RngStream) -> PointCloud:
    """Poisson process with the given intensity (pass ``f.scaled(n)`` for P(nf))."""
    generator = rng.generator
    counts = generator.poisson(intensity.masses)
    cells = np.repeat(np.arange(counts.size), counts)
    return PointCloud(intensity.dimension, _uniform_in_cells(intensity, cells, generator))


def scale_cloud(cloud: PointCloud, factor: float) -> PointCloud:
    if not factor > 0:
        raise ValueError(f"Scale factor must be positive, got {factor}.")
    return PointCloud(cloud.dimension, cloud.points * factor)


def band_mass(f: DensityGrid, g: DensityGrid) -> float:
    """∫|f - g| over the common support."""
    if not f.same_grid(g):
        raise ValueError("Densities must share support and grid.")
    return float(np.abs(f.values - g.values).sum() * f.cell_volume)


def coupling_identity_probability(f: DensityGrid, g: DensityGrid) -> float:
    return math.exp(-band_mass(f, g))


def sample_coupled_pair(f: DensityGrid, g: DensityGrid, rng: RngStream) -> Tuple[PointCloud, PointCloud]:
    """Poisson processes with intensities f and g cut from one unit-rate process.

    A unit-rate process on support x [0, inf) is drawn below the upper envelope
    max(f, g); each cloud keeps the points lying under its own graph.
    """
    if not f.same_grid(g):
        raise ValueError("Densities must share support and grid.")
    generator = rng.generator
    ceiling = np.maximum(f.values, g.values).ravel()
    counts = generator.poisson(ceiling * f.cell_volume)
    cells = np.repeat(np.arange(counts.size), counts)
    positions = _uniform_in_cells(f, cells, generator)
    heights = generator.random(cells.size) * ceiling[cells]
    under_f = heights < f.values.ravel()[cells]
    under_g = heights < g.values.ravel()[cells]
    return PointCloud(f.dimension, positions[under_f]), PointCloud(f.dimension, positions[under_g])
