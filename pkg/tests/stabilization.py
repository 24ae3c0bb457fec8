#!/usr/bin/env python

import math

import numpy as np
import pytest       # type: ignore

from cclt.functionals import FunctionalSpec
from cclt.geometry import Box
from cclt.oracles import limit_delta_component_count
from cclt.point_process import DensityGrid, PointCloud, RngStream
from cclt.stabilization import (
    StabilizationTrace,
    estimate_limit_delta,
    moment_diagnostic,
    nondegeneracy,
    settle_survival,
    settled_by,
    strong_stabilization_probe,
    trace_add_one_cost,
)

COMPONENTS = FunctionalSpec("component_count", r=0.3)
BETA1 = FunctionalSpec("betti_k", 1, 0.3)


def test_settled_by():
    """The settle radius is the start of the final constant run."""
    assert settled_by([1, 2, 3], [4, 4, 4]) == 1
    assert settled_by([1, 2, 3], [0, 1, 1]) == 2
    assert settled_by([1, 2], [1, 0]) is None
    assert settled_by([1], [7]) == 1
    assert settled_by([], []) is None


def test_trace_validation():
    """Windows must grow and carry one value each."""
    with pytest.raises(ValueError):
        StabilizationTrace(1.0, [2.0, 1.0], [0, 0], None)
    with pytest.raises(ValueError):
        StabilizationTrace(1.0, [1.0, 2.0], [0], None)


def test_empty_process_settles_at_once():
    """With λ = 0 the origin is alone in every window."""
    trace = trace_add_one_cost(COMPONENTS, 0.0, 3.0, 6, RngStream(41))
    assert trace.d0_values == [1] * 6
    assert trace.settle_radius == trace.halfwidths[0]
    assert trace.window_sizes[-1] == pytest.approx(36.0)


def test_limit_delta_with_no_points():
    """λ = 0: D_0 is exactly 1 for components and 0 for loops."""
    components = estimate_limit_delta(COMPONENTS, 0.0, 10, RngStream(42))
    assert components.mean == 1.0 and components.std_error == 0.0
    loops = estimate_limit_delta(BETA1, 0.0, 10, RngStream(42))
    assert loops.mean == 0.0
    with pytest.raises(ValueError):
        estimate_limit_delta(COMPONENTS, 1.0, 1, RngStream(42))


def test_limit_delta_matches_networkx_oracle():
    """Mean component-count D_0 agrees with an independent graph computation."""
    ours = estimate_limit_delta(COMPONENTS, 1.0, 2000, RngStream(43))
    mean, error = limit_delta_component_count(1.0, 0.3, 4.0, 2000, seed=43)
    assert abs(ours.mean - mean) <= 4 * math.hypot(ours.std_error, error)


def test_component_traces_settle():
    """Subcritical component counts settle well inside the largest window."""
    traces = [trace_add_one_cost(COMPONENTS, 1.0, 3.0, 12, RngStream(44, i)) for i in range(100)]
    unsettled = sum(not t.settled for t in traces)
    assert unsettled / len(traces) < 0.05


def test_loop_traces_settle():
    """β_1 traces settle and the injection check runs on every settled trace."""
    traces = [trace_add_one_cost(BETA1, 1.0, 3.0, 12, RngStream(45, i)) for i in range(100)]
    assert sum(t.settled for t in traces) >= 95
    checks = [strong_stabilization_probe(BETA1, t, RngStream(46, i)) for i, t in enumerate(traces)]
    ran = [p for p in checks if p is not None]
    assert len(ran) == sum(t.settled for t in traces)
    for check, trace in zip(ran, [t for t in traces if t.settled]):
        assert check.settle_radius == trace.settle_radius
        assert check.baseline == trace.final_value
        assert check.cluster_extent >= 0


def test_injection_next_to_isolated_origin_changes_d0():
    """With an empty sample the origin is alone; points injected within 2r join it."""
    trace = trace_add_one_cost(COMPONENTS, 0.0, 3.0, 12, RngStream(48))
    assert trace.settle_radius == 0.25
    check = strong_stabilization_probe(COMPONENTS, trace, RngStream(49), injected=20)
    assert check.baseline == 1
    assert check.perturbed <= 0
    assert not check.passed
    assert check.cluster_extent == 0.0


def test_injection_beyond_reach_leaves_d0():
    """Points injected more than 2r from an isolated origin do not touch it."""
    trace = StabilizationTrace(0.0, [1.0, 2.0, 3.0], [1, 1, 1], 1.0, 2, PointCloud(2))
    for i in range(20):
        check = strong_stabilization_probe(COMPONENTS, trace, RngStream(50, i))
        assert check.passed
        assert check.perturbed == 1


def test_unsettled_traces_are_skipped():
    """Nothing to check without a settle radius."""
    trace = StabilizationTrace(1.0, [1.0, 2.0], [0, 1], None)
    assert strong_stabilization_probe(BETA1, trace, RngStream(47)) is None


def test_settle_survival():
    """Survival is nonincreasing and unsettled traces survive every t."""
    traces = [
        StabilizationTrace(1.0, [1.0, 2.0, 3.0], [1, 1, 1], 1.0),
        StabilizationTrace(1.0, [1.0, 2.0, 3.0], [0, 1, 1], 2.0),
        StabilizationTrace(1.0, [1.0, 2.0, 3.0], [0, 0, 1], None),
    ]
    survival = settle_survival(traces, [0.5, 1.0, 1.5, 2.0, 10.0])
    assert survival == pytest.approx([1.0, 2 / 3, 2 / 3, 1 / 3, 1 / 3])
    assert all(a >= b for a, b in zip(survival, survival[1:]))
    assert settle_survival([], [1.0]) == [0.0]


def test_nondegeneracy():
    """A constant sample is degenerate, a varied one is not."""
    assert not nondegeneracy([1, 1, 1]).nondegenerate
    report = nondegeneracy([0, 1, 1, 2])
    assert report.nondegenerate
    assert report.distinct_values == 3
    assert report.most_common_share == pytest.approx(0.5)


def test_moment_exponent_must_exceed_two():
    """p <= 2 is not a moment condition."""
    f = DensityGrid.uniform(Box.cube(1.0, 2), 1.0)
    with pytest.raises(ValueError):
        moment_diagnostic(COMPONENTS, f, [10.0], 2.0, RngStream(48))


def test_moments_of_empty_density():
    """No points anywhere: every moment is zero."""
    f = DensityGrid.uniform(Box.cube(1.0, 2), 0.0)
    table = moment_diagnostic(COMPONENTS, f, [10.0], 3.0, RngStream(49))
    assert table.rows == []
    assert table.sup_moment == 0.0
    assert table.sup_window_moment == 0.0


def test_moments_are_finite_and_ordered():
    """Edge-count moments are finite and q-norms grow with q."""
    f = DensityGrid.uniform(Box.cube(1.0, 2), 1.0)
    table = moment_diagnostic(FunctionalSpec("edge_count", r=0.3), f, [20.0, 40.0], 3.0, RngStream(50),
                              locations=2, replications=10)
    assert len(table.rows) == 2 * 2 * 2
    assert math.isfinite(table.sup_moment)
    for row in table.rows:
        assert row.norm(2.5) <= row.norm(3.0) + 1e-12 <= row.norm(4.0) + 2e-12
    assert np.isfinite(table.to_dict()["sup_window_moment"])
