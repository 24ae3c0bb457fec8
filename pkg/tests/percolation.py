#!/usr/bin/env python

import math

import pytest       # type: ignore

from cclt.percolation import (
    DEFAULT_RADII,
    estimate_percolation_radius,
    spanning_curve,
    spanning_threshold,
)
from cclt.point_process import RngStream


def test_threshold_is_reproducible():
    """One stream, one threshold."""
    a = spanning_threshold(8.0, 2, RngStream(61, 1), 1.0)
    b = spanning_threshold(8.0, 2, RngStream(61, 1), 1.0)
    assert a == b
    assert 0 < a <= 1.0 or a == math.inf


def test_sub_and_supercritical_ends():
    """Nothing spans at r = 0.2; everything spans at r = 1.0."""
    curve = spanning_curve(10.0, 2, 40, RngStream(62))
    assert curve.radii[0] == pytest.approx(0.2)
    assert curve.fractions[0] == 0.0
    assert curve.fractions[-1] == 1.0
    assert curve.monotone
    assert curve.unspanned == 0
    assert 0.45 < curve.estimate < 0.75


def test_band_brackets_estimate():
    """The 95% band lies on either side of the point estimate."""
    curve = spanning_curve(10.0, 2, 40, RngStream(63))
    low, high = curve.band
    assert low is not None and high is not None
    assert low <= curve.estimate <= high


def test_estimate_is_stable_across_sizes():
    """Tori of side 20 and 40 agree within five percent."""
    estimate = estimate_percolation_radius(2, [40, 20], 60, RngStream(64))
    assert [c.side for c in estimate.curves] == [20, 40]
    assert estimate.radius == estimate.curves[-1].estimate
    assert 0.5 < estimate.radius < 0.7
    assert estimate.relative_drift < 0.05


def test_line_has_no_threshold():
    """Continuum percolation needs at least two dimensions."""
    with pytest.raises(ValueError):
        estimate_percolation_radius(1, [20], 10, RngStream(65))
    with pytest.raises(ValueError):
        estimate_percolation_radius(2, [], 10, RngStream(65))


def test_default_grid():
    """The default radii are an even grid from 0.2 to 1.0."""
    assert len(DEFAULT_RADII) == 17
    assert DEFAULT_RADII[0] == pytest.approx(0.2)
    assert DEFAULT_RADII[-1] == pytest.approx(1.0)
