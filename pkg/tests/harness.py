#!/usr/bin/env python

import math
import random

import numpy as np
import pytest       # type: ignore

from cclt.config import ExperimentConfig, PercolationSettings
from cclt.functionals import FunctionalSpec
from cclt.geometry import Box
from cclt.harness import (
    LevelTable,
    betti_of_points,
    coupling_check,
    run_betti_clt,
    run_block_approximation,
    run_depoissonization,
    run_homogeneous_clt,
    run_inhomogeneous_clt,
    run_sample,
    scaling_check,
    summarize,
)
from cclt.point_process import DensityGrid, RngStream
from cclt.runner import ReplicationRecord, ordered, parallel_map, workers

EDGES = FunctionalSpec("edge_count", r=0.3)
COMPONENTS = FunctionalSpec("component_count", r=0.3)


def _config(**kwargs) -> ExperimentConfig:
    kwargs.setdefault("threads", 1)
    return ExperimentConfig(**kwargs).validate()


def _two_level(low=1.0, high=2.0) -> dict:
    return DensityGrid(Box.cube(1.0, 2), (2, 1), np.array([low, high])).to_dict()


def test_workers():
    """Thread counts below one are refused; None means every core."""
    assert workers(3) == 3
    assert workers(None) >= 1
    with pytest.raises(ValueError):
        workers(0)


def test_parallel_map_keeps_order():
    """Results come back in input order for any worker count."""
    assert parallel_map(lambda x: x * x, range(10), 1) == [x * x for x in range(10)]
    assert parallel_map(lambda x: x * x, range(10), 2) == [x * x for x in range(10)]


def test_ordered_rejects_duplicates():
    """Each index appears once per process."""
    records = [ReplicationRecord(1, "poisson", 10, 1.0, 3), ReplicationRecord(1, "poisson", 10, 2.0, 3)]
    with pytest.raises(ValueError):
        ordered(records)
    with pytest.raises(ValueError):
        ReplicationRecord(0, "poisson", 10, math.nan, 3)


def test_summaries_ignore_record_order():
    """Summaries are a fold over records sorted by index."""
    records = [ReplicationRecord(i, "poisson", 10.0, float(i % 4), i) for i in range(40)]
    shuffled = list(records)
    random.Random(71).shuffle(shuffled)
    assert summarize(shuffled) == summarize(records)


def test_empty_process_has_zero_variance():
    """λ = 0 gives a degenerate sample that is flagged, not an error."""
    summary = run_homogeneous_clt(_config(functional=EDGES, lam=0.0, n_values=[10.0], replications=5))
    assert summary.rows[0].variance_per_n == 0.0
    assert summary.rows[0].degenerate
    assert summary.flags


def test_edge_count_on_the_line():
    """In d=1 the mean edge count is λ²(2sL - s²)/2 with s = 2r."""
    r, lam = 0.25, 1.0
    config = _config(functional=FunctionalSpec("edge_count", r=r), dimension=1, lam=lam,
                     n_values=[50.0, 100.0], replications=200)
    summary = run_homogeneous_clt(config)
    s = 2 * r
    for row in summary.rows:
        expected = lam ** 2 * (2 * s * row.n - s ** 2) / 2
        assert abs(row.mean - expected) <= 4 * math.sqrt(row.variance / row.replications)


def test_replication_indices():
    """Replication i at schedule position j has global index j·m + i."""
    summary = run_homogeneous_clt(_config(functional=EDGES, lam=1.0, n_values=[10.0, 20.0], replications=5))
    assert [r.index for r in summary.records] == list(range(10))
    assert {r.n for r in summary.records if r.index >= 5} == {20.0}


def test_thread_count_does_not_change_results():
    """Records and summaries agree bit for bit across worker counts."""
    base = dict(functional=COMPONENTS, lam=1.0, n_values=[20.0, 40.0], replications=8)
    one = run_homogeneous_clt(_config(threads=1, **base))
    two = run_homogeneous_clt(_config(threads=2, **base))
    assert [r.row() for r in one.records] == [r.row() for r in two.records]
    assert one.to_dict() == two.to_dict()


def test_single_block_matches_total():
    """With L = n one block covers the cube, so Y - X vanishes; L > n is skipped."""
    config = _config(experiment="clt-blocks", functional=COMPONENTS, lam=1.0, n_values=[16.0],
                     block_volumes=[4.0, 16.0, 32.0], replications=10)
    summary = run_block_approximation(config)
    rows = {block.block_volume: block for block in summary.blocks}
    assert set(rows) == {4.0, 16.0}
    assert rows[16.0].blocks == 1
    assert rows[16.0].variance == 0.0
    assert rows[4.0].blocks == 4
    assert any("L=32" in notice for notice in summary.notices)


def test_block_variance_shrinks_with_block_size():
    """Var[Y_n - X_{n,L}] does not grow as the blocks get larger."""
    config = _config(experiment="clt-blocks", functional=COMPONENTS, lam=1.0, n_values=[64.0],
                     block_volumes=[4.0, 16.0, 64.0], replications=200)
    rows = sorted(run_block_approximation(config).blocks, key=lambda block: block.block_volume)
    assert [block.block_volume for block in rows] == [4.0, 16.0, 64.0]
    for smaller, larger in zip(rows, rows[1:]):
        assert larger.variance <= smaller.variance + 2 * math.hypot(smaller.variance_se, larger.variance_se)
    assert rows[0].variance > rows[1].variance > rows[2].variance == 0.0


def test_blocks_need_a_schedule():
    """An empty block schedule is a usage error."""
    with pytest.raises(ValueError):
        run_block_approximation(_config(functional=COMPONENTS, lam=1.0, n_values=[16.0], replications=3))


def test_levels_combine_by_volume():
    """σ² is the volume-weighted sum of level estimates; the zero level needs no samples."""
    config = _config(experiment="clt-poisson", functional=EDGES, density=_two_level(0.0, 2.0),
                     n_values=[30.0], replications=10, level_replications=10, level_volume=30.0)
    summary = run_inhomogeneous_clt(config)
    levels = {entry.value: entry for entry in summary.levels}
    assert levels[0.0].sigma2 == 0.0
    assert summary.sigma2 == pytest.approx(0.5 * levels[2.0].sigma2)
    assert not any(r.process.startswith("level-0") for r in summary.records)
    assert any(r.process == "level-2" for r in summary.records)


def test_level_cache():
    """A level is estimated once per functional and radius."""
    table = LevelTable(_config(functional=EDGES, n_values=[20.0], replications=4))
    first = table.estimate(1.0)
    count = len(table.records)
    assert table.estimate(1.0) == first
    assert len(table.records) == count


def test_two_level_density():
    """variance/n on the two-level density is within 15% of the volume-weighted level variances."""
    config = _config(experiment="clt-poisson", functional=EDGES, density=_two_level(),
                     n_values=[400.0], replications=2000, level_replications=2000, level_volume=400.0)
    summary = run_inhomogeneous_clt(config)
    assert [entry.value for entry in summary.levels] == [1.0, 2.0]
    row = summary.row("poisson", 400.0)
    assert row.replications == 2000
    assert row.variance_per_n == pytest.approx(summary.sigma2, rel=0.15)
    assert row.mean_per_n == pytest.approx(summary.slln_prediction, rel=0.05)


def test_constant_density_matches_homogeneous_run():
    """f ≡ λ on the unit square gives the same draws as the homogeneous run."""
    base = dict(functional=COMPONENTS, n_values=[16.0, 36.0], replications=10)
    homogeneous = run_homogeneous_clt(_config(lam=1.5, **base))
    density = DensityGrid.uniform(Box.cube(1.0, 2), 1.5).to_dict()
    inhomogeneous = run_inhomogeneous_clt(_config(experiment="clt-poisson", density=density, **base))
    poisson = [(r.index, r.value, r.count) for r in inhomogeneous.records if r.process == "poisson"]
    assert poisson == [(r.index, r.value, r.count) for r in homogeneous.records]


def test_depoissonization_of_edges():
    """Var[P_n]/n - Var[X_n]/n is close to Δ̄² for the edge count, whose Δ̄ is λπ(2r)²."""
    config = _config(experiment="clt-binomial", functional=EDGES, n_values=[400.0], replications=800,
                     level_replications=800, level_volume=400.0, delta_replications=2000)
    summary = run_depoissonization(config)
    eta = math.pi * (2 * EDGES.r) ** 2
    assert summary.delta_bar == pytest.approx(eta, rel=0.1)
    assert summary.sigma2 == pytest.approx(eta / 2 + eta ** 2, rel=0.2)
    assert not summary.tau2_clamped
    report = summary.depoissonization[0]
    assert report.binomial_below_poisson
    assert report.gap_relative_error < 0.35
    assert report.count_variance_ratio == pytest.approx(1.0, abs=0.3)


def test_depoissonization_of_components():
    """The component count keeps the binomial variance below the Poissonized one by about Δ̄²."""
    config = _config(experiment="clt-binomial", functional=COMPONENTS, n_values=[400.0], replications=1200,
                     level_replications=800, level_volume=400.0, delta_replications=2000)
    summary = run_depoissonization(config)
    assert summary.delta_bar > 0
    assert not summary.tau2_clamped
    report = summary.depoissonization[0]
    assert report.binomial_below_poisson
    assert report.gap_relative_error < 0.35


def test_paired_values_coincide_when_counts_match():
    """N = n reuses the binomial set, so the two values agree."""
    config = _config(experiment="clt-binomial", functional=COMPONENTS, n_values=[10.0], replications=60,
                     level_replications=4, level_volume=10.0, delta_replications=4, increment_q=3.0)
    summary = run_depoissonization(config)
    assert summary.depoissonization[0].increment_moment is not None
    assert all(r.count == 11 for r in summary.records if r.process == "increment")
    binomial = {r.index: r for r in summary.records if r.process == "binomial"}
    poisson = {r.index: r for r in summary.records if r.process == "poisson"}
    matched = [i for i, r in poisson.items() if r.count == 10]
    assert matched
    for i in matched:
        assert poisson[i].value == binomial[i].value


def test_binomial_sizes_are_integers():
    """The binomial process needs a whole number of points."""
    config = _config(experiment="clt-binomial", functional=COMPONENTS, n_values=[10.5], replications=3,
                     delta_replications=2)
    with pytest.raises(ValueError):
        run_depoissonization(config)


def test_betti_gate():
    """Below the percolation bound the gate passes; above it d=2 only gets a notice."""
    base = dict(experiment="betti", dimension=2, n_values=[30.0, 60.0], replications=20,
                level_replications=10, level_volume=60.0,
                percolation=PercolationSettings(critical_radius=0.6))
    below = run_betti_clt(_config(functional=FunctionalSpec("betti_k", 1, 0.3), **base))
    assert below.gate_passed
    assert below.critical_bound == pytest.approx(0.6)
    assert {row.process for row in below.rows} == {"binomial", "poisson"}
    above = run_betti_clt(_config(functional=FunctionalSpec("betti_k", 1, 0.8), **base))
    assert not above.gate_passed
    assert any("advisory" in notice for notice in above.notices)


def test_betti_mean_per_n_is_stable():
    """β_1/n barely moves between n = 200 and n = 400 for both processes."""
    config = _config(experiment="betti", functional=FunctionalSpec("betti_k", 1, 0.3), n_values=[200.0, 400.0],
                     replications=200, level_replications=10, level_volume=400.0,
                     percolation=PercolationSettings(critical_radius=0.6))
    summary = run_betti_clt(config)
    for process in ("binomial", "poisson"):
        small, large = summary.row(process, 200.0), summary.row(process, 400.0)
        assert large.mean_per_n > 0
        assert abs(small.mean_per_n - large.mean_per_n) <= 0.35 * large.mean_per_n


def test_betti_on_the_line():
    """d = 1 has no percolation threshold and only β_0."""
    config = _config(experiment="betti", functional=FunctionalSpec("betti_k", 0, 0.3), dimension=1,
                     n_values=[20.0], replications=10, level_replications=5, level_volume=20.0)
    summary = run_betti_clt(config)
    assert summary.critical_bound is None
    assert summary.gate_passed
    with pytest.raises(ValueError):
        run_betti_clt(ExperimentConfig(experiment="betti", functional=FunctionalSpec("betti_k", 1, 0.3),
                                       dimension=1, threads=1))


def test_betti_of_points():
    """Four square corners at r = 0.6 give β = (1, 1) and χ = 0."""
    config = _config(experiment="betti", functional=FunctionalSpec("betti_k", 1, 0.6),
                     points=[[0, 0], [1, 0], [1, 1], [0, 1]])
    result = betti_of_points(config)
    assert result["betti"] == [1, 1]
    assert result["simplices"] == [4, 4, 0]
    assert result["euler_characteristic"] == 0


def test_run_sample():
    """An empty density samples nothing; the binomial process gives exactly n points."""
    empty = DensityGrid.uniform(Box.cube(1.0, 2), 0.0).to_dict()
    assert len(run_sample(_config(experiment="sample", density=empty, n_values=[50.0]))) == 0
    cloud = run_sample(_config(experiment="sample", density=_two_level(), process="binomial", n_values=[50.0]))
    assert len(cloud) == 50
    with pytest.raises(ValueError):
        run_sample(_config(experiment="sample", density=_two_level(), process="binomial", n_values=[50.5]))


def test_scaling():
    """β_1 at (λ=2, r) in volume n matches (λ=1, √2 r) in volume 2n."""
    check = scaling_check(FunctionalSpec("betti_k", 1, 0.3), 2.0, 50.0, 150, RngStream(72))
    assert check.accepted
    with pytest.raises(ValueError):
        scaling_check(EDGES, 0.0, 50.0, 10, RngStream(72))


def test_coupling_rate():
    """Coupled processes for f = 1 and g = 1.2 coincide with probability exp(-0.2)."""
    f = DensityGrid.uniform(Box.cube(1.0, 2), 1.0)
    g = DensityGrid.uniform(Box.cube(1.0, 2), 1.2)
    check = coupling_check(f, g, 10_000, RngStream(73))
    assert check.frequency == pytest.approx(math.exp(-0.2), abs=0.012)
    assert check.passed
    with pytest.raises(ValueError):
        coupling_check(f, g, 0, RngStream(73))
