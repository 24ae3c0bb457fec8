"""Points, boxes, balls and the smallest enclosing ball.

Everything here is pure and works on immutable inputs, so it may be called
from any number of workers at once.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

# Absolute tolerance for every "inside a closed ball" comparison.
TOLERANCE = 1e-12

PointLike = Union["Point", Sequence[float], np.ndarray]


@dataclass(frozen=True)
class Point:
    coords: Tuple[float, ...]

    def __post_init__(self):
        coords = tuple(float(c) for c in self.coords)
        if not coords:
            raise ValueError("A point needs at least one coordinate.")
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"Point coordinates must be finite, got {coords}.")
        object.__setattr__(self, "coords", coords)

    @property
    def dimension(self) -> int:
        return len(self.coords)

    @classmethod
    def origin(cls, dimension: int) -> "Point":
        return cls((0.0,) * dimension)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype or float)

    def __iter__(self) -> Iterator[float]:
        return iter(self.coords)

    def __len__(self) -> int:
        return len(self.coords)


def as_array(point: PointLike) -> np.ndarray:
    """Coordinates of a point as a 1-d float array."""
    if isinstance(point, Point):
        return np.asarray(point.coords, dtype=float)
    array = np.asarray(point, dtype=float)
    if array.ndim != 1 or array.size == 0:
        raise ValueError(f"Expected a single point, got shape {array.shape}.")
    return array


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``min_corner + [0, side_lengths)``."""

    min_corner: Point
    side_lengths: Tuple[float, ...]

    def __post_init__(self):
        if not isinstance(self.min_corner, Point):
            object.__setattr__(self, "min_corner", Point(tuple(self.min_corner)))
        sides = tuple(float(s) for s in self.side_lengths)
        if len(sides) != self.min_corner.dimension:
            raise ValueError(
                f"Box corner has dimension {self.min_corner.dimension} but {len(sides)} side lengths were given."
            )
        if not all(math.isfinite(s) and s > 0 for s in sides):
            raise ValueError(f"Box side lengths must be positive, got {sides}.")
        object.__setattr__(self, "side_lengths", sides)

    @classmethod
    def cube(cls, side: float, dimension: int, origin: Optional[PointLike] = None) -> "Box":
        corner = Point.origin(dimension) if origin is None else Point(tuple(as_array(origin)))
        return cls(corner, (side,) * dimension)

    @classmethod
    def centered(cls, halfwidth: float, dimension: int) -> "Box":
        """The cube ``[-halfwidth, halfwidth)^d``."""
        return cls(Point((-halfwidth,) * dimension), (2 * halfwidth,) * dimension)

    @property
    def dimension(self) -> int:
        return len(self.side_lengths)

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.min_corner.coords, dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return self.lower + np.asarray(self.side_lengths)

    @property
    def volume(self) -> float:
        return float(np.prod(self.side_lengths))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Half-open membership mask for an ``(n, d)`` array (or one point)."""
        points = np.asarray(points, dtype=float)
        inside = (points >= self.lower) & (points < self.upper)
        return inside.all(axis=-1)

    def scaled(self, factor: float) -> "Box":
        return Box(Point(tuple(self.lower * factor)), tuple(np.asarray(self.side_lengths) * factor))

    def lattice_blocks(self, side: float, contained_only: bool = True) -> List["Box"]:
        """Cubes of the lattice ``min_corner + side * Z^d`` inside (or meeting) the box.

        With ``contained_only`` only cubes entirely inside the box are returned,
        otherwise every lattice cube that intersects it.
        """
        counts = []
        for length in self.side_lengths:
            ratio = length / side
            if contained_only:
                counts.append(int(math.floor(ratio + 1e-9)))
            else:
                counts.append(int(math.ceil(ratio - 1e-9)))
        blocks = []
        for index in itertools.product(*(range(c) for c in counts)):
            corner = self.lower + side * np.asarray(index, dtype=float)
            blocks.append(Box(Point(tuple(corner)), (side,) * self.dimension))
        return blocks


@dataclass(frozen=True)
class Ball:
    center: Point
    radius: float

    def __post_init__(self):
        if not isinstance(self.center, Point):
            object.__setattr__(self, "center", Point(tuple(as_array(self.center))))
        if not self.radius >= 0:
            raise ValueError(f"Ball radius must be nonnegative, got {self.radius}.")

    def contains(self, point: PointLike, tol: float = TOLERANCE) -> bool:
        return _norm(as_array(point) - as_array(self.center)) <= self.radius + tol


def _norm(vector: np.ndarray) -> float:
    return math.sqrt(float(np.sum(vector * vector)))


def pairwise_lengths(differences: np.ndarray) -> np.ndarray:
    """Row-wise Euclidean lengths, computed the same way as ``distance``."""
    return np.sqrt(np.sum(differences * differences, axis=-1))


def distance(a: PointLike, b: PointLike) -> float:
    a, b = as_array(a), as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"Dimension mismatch: {a.size} vs {b.size}.")
    return _norm(a - b)


def periodic_difference(a: np.ndarray, b: np.ndarray, period: float) -> np.ndarray:
    """Minimal-image displacement ``b - a`` on the torus ``[0, period)^d``."""
    delta = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    return delta - period * np.round(delta / period)


def within_reach(length: Union[float, np.ndarray], r: float):
    """Two closed r-balls whose centers are ``length`` apart intersect."""
    return length / 2 <= r + TOLERANCE


def _circumball(boundary: List[np.ndarray]) -> Tuple[Optional[np.ndarray], float]:
    """Smallest ball with every boundary point on its sphere."""
    if not boundary:
        return None, -math.inf
    anchor = boundary[0]
    if len(boundary) == 1:
        return anchor, 0.0
    if len(boundary) == 2:
        return (anchor + boundary[1]) / 2, _norm(boundary[1] - anchor) / 2
    # Center lies in the affine hull: c = anchor + A^T x with 2 A A^T x = |A_i|^2.
    spans = np.stack([p - anchor for p in boundary[1:]])
    gram = 2 * spans @ spans.T
    rhs = np.sum(spans * spans, axis=1)
    coeffs = np.linalg.lstsq(gram, rhs, rcond=None)[0]
    center = anchor + spans.T @ coeffs
    return center, max(_norm(p - center) for p in boundary)


def _inside(center: Optional[np.ndarray], radius: float, point: np.ndarray) -> bool:
    if center is None:
        return False
    return _norm(point - center) <= radius + TOLERANCE


def _move_to_front(points: List[np.ndarray], end: int, boundary: List[np.ndarray], dimension: int):
    center, radius = _circumball(boundary)
    if len(boundary) == dimension + 1:
        return center, radius
    for i in range(end):
        if _inside(center, radius, points[i]):
            continue
        center, radius = _move_to_front(points, i, boundary + [points[i]], dimension)
        points.insert(0, points.pop(i))
    return center, radius


def min_enclosing_ball(points: Sequence[PointLike]) -> Ball:
    """Smallest closed ball containing the points (at most d+1 of them)."""
    arrays = [as_array(p) for p in points]
    if not arrays:
        raise ValueError("min_enclosing_ball needs at least one point.")
    dimension = arrays[0].size
    if any(a.size != dimension for a in arrays):
        raise ValueError("All points must share one dimension.")
    if len(arrays) > dimension + 1:
        raise ValueError(f"At most {dimension + 1} points are supported in dimension {dimension}.")
    center, radius = _move_to_front(list(arrays), len(arrays), [], dimension)
    return Ball(Point(tuple(center)), float(radius))


def simplex_in_cech(points: Sequence[PointLike], r: float) -> bool:
    """The closed r-balls around the points share a common point.

    More than d + 1 points are decided by testing every (d + 1)-subset.
    """
    arrays = [as_array(p) for p in points]
    if arrays and len(arrays) > arrays[0].size + 1:
        return all(
            min_enclosing_ball(subset).radius <= r + TOLERANCE
            for subset in itertools.combinations(arrays, arrays[0].size + 1)
        )
    return min_enclosing_ball(arrays).radius <= r + TOLERANCE
