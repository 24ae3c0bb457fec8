#!/usr/bin/env python

import math

import numpy as np
import pytest       # type: ignore
from scipy import stats

from cclt.geometry import Box
from cclt.point_process import (
    DensityGrid,
    PointCloud,
    RngStream,
    band_mass,
    coupling_identity_probability,
    sample_binomial,
    sample_coupled_pair,
    sample_homogeneous,
    sample_inhomogeneous,
    sample_poissonized,
    sample_poissonized_pair,
    scale_cloud,
)
from cclt.stats import chi_square_gof, chi_square_independence

ALPHA = 0.01


def _two_level():
    """Density 1 on the left half of the unit square and 2 on the right."""
    return DensityGrid(Box.cube(1.0, 2), (2, 1), np.array([1.0, 2.0]))


def _poisson_gof(counts, mean, top):
    """Counts binned as 0, 1, ..., top - 1 and top-or-more against Poisson(mean)."""
    counts = np.asarray(counts)
    observed = [np.sum(counts == k) for k in range(top)] + [np.sum(counts >= top)]
    pmf = stats.poisson.pmf(np.arange(top), mean)
    return chi_square_gof(observed, list(pmf) + [1 - pmf.sum()])


def _cell_counts(f, cloud):
    return [int(box.contains(cloud.points).sum()) for box, _ in f.cell_boxes()]


def test_streams_are_reproducible():
    """The same key gives the same draws, a different key different ones."""
    a = RngStream(7, 3).generator.random(5)
    b = RngStream(7, 3).generator.random(5)
    c = RngStream(7, 4).generator.random(5)
    d = RngStream(7, 3).substream(1).generator.random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_stream_rejects_negative_index():
    """Stream indices are nonnegative."""
    with pytest.raises(ValueError):
        RngStream(0, -1)


def test_density_validation():
    """Negative values and the wrong number of cells are rejected."""
    with pytest.raises(ValueError):
        DensityGrid(Box.cube(1.0, 2), (2, 1), np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        DensityGrid(Box.cube(1.0, 2), (2, 2), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        DensityGrid(Box.cube(1.0, 2), (2,), np.array([1.0, 2.0]))


def test_density_levels_and_mass():
    """Levels pair each distinct value with the volume it covers."""
    f = _two_level()
    assert f.total_mass == pytest.approx(1.5)
    assert f.sup == 2.0
    assert f.levels() == [(1.0, pytest.approx(0.5)), (2.0, pytest.approx(0.5))]
    assert f.normalized().total_mass == pytest.approx(1.0)


def test_density_file(tmp_path):
    """A density saved to JSON loads back on the same grid with the same values."""
    f = _two_level()
    f.save(tmp_path / "f.json")
    g = DensityGrid.load(tmp_path / "f.json")
    assert g.same_grid(f)
    assert np.array_equal(g.values, f.values)


def test_from_function_uses_midpoints():
    """Projected values are taken at cell midpoints."""
    f = DensityGrid.from_function(lambda p: p[0], Box.cube(1.0, 1), (4,))
    assert f.values == pytest.approx([0.125, 0.375, 0.625, 0.875])


def test_binomial_sample():
    """Exactly n points, all inside the support."""
    f = _two_level()
    cloud = sample_binomial(f, 200, RngStream(1))
    assert len(cloud) == 200
    assert f.support.contains(cloud.points).all()


def test_binomial_needs_mass():
    """A zero density cannot be sampled from."""
    f = DensityGrid.uniform(Box.cube(1.0, 2), 0.0)
    with pytest.raises(ValueError):
        sample_binomial(f, 5, RngStream(1))
    assert len(sample_inhomogeneous(f, RngStream(1))) == 0


def test_homogeneous_mean_count():
    """Counts average λ·vol within three standard errors."""
    box = Box.cube(math.sqrt(10.0), 2)
    counts = [len(sample_homogeneous(2.0, box, RngStream(3, i))) for i in range(200)]
    assert abs(np.mean(counts) - 20.0) <= 3 * math.sqrt(20.0 / 200)


def test_inhomogeneous_follows_levels():
    """The right half receives about twice as many points as the left."""
    f = _two_level().scaled(100.0)
    left = right = 0
    for i in range(100):
        cloud = sample_inhomogeneous(f, RngStream(4, i))
        left += int(np.sum(cloud.points[:, 0] < 0.5))
        right += int(np.sum(cloud.points[:, 0] >= 0.5))
    assert left == pytest.approx(5000, abs=4 * math.sqrt(5000))
    assert right == pytest.approx(10000, abs=4 * math.sqrt(10000))


def test_poissonized_pair_shares_prefix():
    """The sequence covers both the binomial and the Poissonized sets."""
    points, count = sample_poissonized_pair(_two_level().normalized(), 30, RngStream(5), extra=2)
    assert len(points) == max(30, count) + 2


def test_scaling_and_translation():
    """Scaling multiplies coordinates; restriction keeps half-open membership."""
    cloud = PointCloud.from_points([(0.5, 0.5), (1.0, 0.2)])
    scaled = scale_cloud(cloud, 2.0)
    assert scaled.points.tolist() == [[1.0, 1.0], [2.0, 0.4]]
    assert len(cloud.restrict(Box.cube(1.0, 2))) == 1
    with pytest.raises(ValueError):
        scale_cloud(cloud, 0.0)


def test_cloud_csv(tmp_path):
    """Clouds survive a CSV file exactly; an empty one is a bare header."""
    cloud = sample_binomial(_two_level(), 20, RngStream(6))
    cloud.to_csv(tmp_path / "points.csv")
    assert PointCloud.from_csv(tmp_path / "points.csv").same_as(cloud)
    PointCloud(3).to_csv(tmp_path / "empty.csv")
    assert (tmp_path / "empty.csv").read_text().splitlines() == ["x0,x1,x2"]


def test_band_mass():
    """∫|f - g| for constant densities on the unit square."""
    f = DensityGrid.uniform(Box.cube(1.0, 2), 1.0)
    g = DensityGrid.uniform(Box.cube(1.0, 2), 1.2)
    assert band_mass(f, g) == pytest.approx(0.2)
    assert coupling_identity_probability(f, g) == pytest.approx(math.exp(-0.2))
    with pytest.raises(ValueError):
        band_mass(f, DensityGrid.uniform(Box.cube(2.0, 2), 1.0))


def test_coupled_pair_identical_for_equal_densities():
    """Equal intensities always yield identical clouds."""
    f = _two_level().scaled(5.0)
    for i in range(20):
        a, b = sample_coupled_pair(f, f, RngStream(8, i))
        assert a.same_as(b)


def test_binomial_cell_split():
    """With cell masses 0.9 and 0.1 the left cell gets about 9000 of 10⁴ points."""
    f = DensityGrid(Box.cube(1.0, 2), (2, 1), np.array([0.9, 0.1]))
    cloud = sample_binomial(f, 10_000, RngStream(9))
    left = int(np.sum(cloud.points[:, 0] < 0.5))
    assert abs(left - 9000) <= 3 * math.sqrt(10_000 * 0.09)


def test_poissonized_counts():
    """n = 0 gives an empty cloud and the count averages n."""
    f = _two_level().normalized()
    assert len(sample_poissonized(f, 0, RngStream(10))) == 0
    counts = [len(sample_poissonized(f, 10.0, RngStream(10, i))) for i in range(2000)]
    assert abs(np.mean(counts) - 10.0) <= 3 * math.sqrt(10.0 / 2000)


def test_poissonized_halves_are_independent():
    """Counts in the two halves of the support pass a chi-square independence test."""
    f = DensityGrid.uniform(Box.cube(1.0, 2), 1.0, (2, 1))
    table = np.zeros((5, 5))
    for i in range(2000):
        cloud = sample_poissonized(f, 10.0, RngStream(11, i))
        left = int(np.sum(cloud.points[:, 0] < 0.5))
        right = len(cloud) - left
        table[min(max(left, 3), 7) - 3, min(max(right, 3), 7) - 3] += 1
    assert chi_square_independence(table).pvalue > ALPHA


def test_homogeneous_unit_cells_are_poisson():
    """At λ = 1 on [0, 10)² the unit-cell counts fit Poisson(1)."""
    counts = []
    for i in range(20):
        cloud = sample_homogeneous(1.0, Box.cube(10.0, 2), RngStream(12, i))
        cells = np.floor(cloud.points).astype(int)
        counts.extend(np.bincount(cells[:, 0] * 10 + cells[:, 1], minlength=100))
    assert _poisson_gof(counts, 1.0, 4).pvalue > ALPHA


def test_coupled_marginals_are_poisson():
    """Each side of a coupled pair has Poisson cell counts with its own mean."""
    f = DensityGrid.uniform(Box.cube(4.0, 2), 1.0, (4, 4))
    g = DensityGrid.uniform(Box.cube(4.0, 2), 2.0, (4, 4))
    first, second = [], []
    for i in range(200):
        a, b = sample_coupled_pair(f, g, RngStream(13, i))
        first.extend(_cell_counts(f, a))
        second.extend(_cell_counts(g, b))
    assert _poisson_gof(first, 1.0, 4).pvalue > ALPHA
    assert _poisson_gof(second, 2.0, 6).pvalue > ALPHA


def test_coupling_against_zero_density():
    """With g ≡ 0 the second cloud is always empty; the first is nonempty with probability 1 - 1/e."""
    f = DensityGrid.uniform(Box.cube(1.0, 2), 1.0)
    g = DensityGrid.uniform(Box.cube(1.0, 2), 0.0)
    nonempty = 0
    for i in range(2000):
        a, b = sample_coupled_pair(f, g, RngStream(14, i))
        assert len(b) == 0
        nonempty += len(a) > 0
    p = 1 - math.exp(-1)
    assert abs(nonempty / 2000 - p) <= 3 * math.sqrt(p * (1 - p) / 2000)
