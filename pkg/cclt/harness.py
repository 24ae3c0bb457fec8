"""Monte Carlo experiments for the central limit theorems.

Every replication gets its own ``RngStream`` keyed by its global index
``position * m + i`` (position in the n schedule, replication number), and
every summary is a fold over records sorted by that index, so results do not
depend on the number of workers.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import chain
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from dataclasses_json import DataClassJsonMixin
from scipy import stats as scipy_stats

from cclt.cech import build_cech, euler_characteristic
from cclt.config import ExperimentConfig
from cclt.data_structs import SimplicialComplex
from cclt.functionals import FunctionalSpec, evaluate
from cclt.geometry import Box
from cclt.homology import betti_numbers
from cclt.percolation import DEFAULT_RADII, PercolationEstimate, estimate_percolation_radius
from cclt.point_process import (
    DensityGrid,
    PointCloud,
    RngStream,
    coupling_identity_probability,
    sample_binomial,
    sample_coupled_pair,
    sample_homogeneous,
    sample_inhomogeneous,
    sample_poissonized,
    sample_poissonized_pair,
    scale_cloud,
)
from cclt.runner import ReplicationRecord, ordered, parallel_map, timed_record
from cclt.stabilization import (
    NondegeneracyReport,
    StabilizationTrace,
    estimate_limit_delta,
    limit_delta_samples,
    moment_diagnostic,
    nondegeneracy,
    settle_survival,
    strong_stabilization_probe,
    trace_add_one_cost,
)
from cclt.stats import binomial_standard_error, ks_test, moments, standardize, two_sample_ks, variance_standard_error

logger = logging.getLogger(__name__)

# Stream namespaces; runs inside one experiment never share draws.
MAIN, LEVELS, DELTA, PERCOLATION, PROBE = range(5)


@dataclass
class RowSummary(DataClassJsonMixin):
    process: str
    n: float
    replications: int
    mean: float
    variance: float
    mean_per_n: float
    variance_per_n: float
    variance_per_n_se: float
    ks_statistic: float
    ks_pvalue: float
    skewness: float
    kurtosis: float
    mean_count: float
    degenerate: bool


@dataclass
class LevelEntry(DataClassJsonMixin):
    """One density level: its volume and homogeneous estimates at that intensity."""

    value: float
    volume: float
    sigma2: float
    sigma2_se: float
    mean_per_volume: float
    finite_sigma2: Dict[str, float] = field(default_factory=dict)


@dataclass
class BlockRow(DataClassJsonMixin):
    n: float
    block_volume: float
    blocks: int
    variance: float
    variance_se: float
    variance_per_n: float


@dataclass
class DepoissonizationReport(DataClassJsonMixin):
    n: float
    binomial_variance_per_n: float
    poisson_variance_per_n: float
    gap: float
    predicted_gap: Optional[float]
    gap_relative_error: Optional[float]
    paired_pvalue: float
    binomial_below_poisson: bool
    count_variance_ratio: float
    growth_ratio: float
    increment_moment: Optional[float] = None


@dataclass
class CltSummary(DataClassJsonMixin):
    experiment: str
    functional: FunctionalSpec
    rows: List[RowSummary]
    sigma2: Optional[float] = None
    sigma2_se: Optional[float] = None
    delta_bar: Optional[float] = None
    delta_bar_se: Optional[float] = None
    tau2: Optional[float] = None
    tau2_clamped: bool = False
    slln_prediction: Optional[float] = None
    levels: List[LevelEntry] = field(default_factory=list)
    blocks: List[BlockRow] = field(default_factory=list)
    depoissonization: List[DepoissonizationReport] = field(default_factory=list)
    percolation: Optional[PercolationEstimate] = None
    critical_bound: Optional[float] = None
    gate_passed: Optional[bool] = None
    flags: List[str] = field(default_factory=list)
    notices: List[str] = field(default_factory=list)
    records: List[ReplicationRecord] = field(default_factory=list, repr=False)

    def to_dict(self, encode_json=False) -> dict:
        d = super().to_dict(encode_json)
        d.pop("records", None)
        return d

    def row(self, process: str, n: float) -> RowSummary:
        for row in self.rows:
            if row.process == process and row.n == n:
                return row
        raise KeyError(f"No summary row for {process} at n={n:g}.")

    def flag(self, message: str):
        logger.warning(message)
        self.flags.append(message)

    def notice(self, message: str):
        logger.info(message)
        self.notices.append(message)


def summarize(records: Sequence[ReplicationRecord]) -> List[RowSummary]:
    """Per (process, n) statistics; a pure fold over index-ordered records."""
    groups: Dict[Tuple[str, float], List[ReplicationRecord]] = {}
    for record in ordered(records):
        groups.setdefault((record.process, record.n), []).append(record)
    rows = []
    for (process, n), group in sorted(groups.items()):
        values = [r.value for r in group]
        m = moments(values)
        ks = ks_test(standardize(values))
        rows.append(RowSummary(
            process=process,
            n=n,
            replications=len(values),
            mean=m.mean,
            variance=m.variance,
            mean_per_n=m.mean / n,
            variance_per_n=m.variance / n,
            variance_per_n_se=variance_standard_error(m.variance, len(values)) / n,
            ks_statistic=ks.statistic,
            ks_pvalue=ks.pvalue,
            skewness=m.skewness,
            kurtosis=m.kurtosis,
            mean_count=float(np.mean([r.count for r in group])),
            degenerate=m.variance == 0.0,
        ))
    return rows


def _stream(config: ExperimentConfig, index: int, *path: int) -> RngStream:
    return RngStream(config.master_seed, index, tuple(path))


def _replicate(config: ExperimentConfig, process: str,
               sample: Callable[[float, RngStream], PointCloud]) -> List[ReplicationRecord]:
    m = config.replications
    spec = config.functional
    tasks = [(position, n, i) for position, n in enumerate(config.n_values) for i in range(m)]

    def one(task) -> ReplicationRecord:
        position, n, i = task
        index = position * m + i
        return timed_record(spec, sample(n, _stream(config, index, MAIN)), index, process, n)

    return parallel_map(one, tasks, config.threads)


def _finish(summary: CltSummary) -> CltSummary:
    by_process: Dict[str, List[RowSummary]] = {}
    for row in summary.rows:
        if row.degenerate:
            summary.flag(f"Degenerate sample (zero variance) for {row.process} at n={row.n:g}.")
        by_process.setdefault(row.process, []).append(row)
    for process, rows in by_process.items():
        if len(rows) >= 2 and rows[-2].variance_per_n > 0:
            change = abs(rows[-1].variance_per_n - rows[-2].variance_per_n) / rows[-2].variance_per_n
            summary.notice(f"{process}: variance/n changed by {100 * change:.1f}% over the last step of n.")
    return summary


def _require_lam(config: ExperimentConfig) -> float:
    if config.lam is None:
        raise ValueError(f"{config.experiment} needs a homogeneous intensity 'lam'.")
    return config.lam


def _binomial_size(n: float) -> int:
    if n != int(n):
        raise ValueError(f"Binomial sample sizes must be integers, got {n:g}.")
    return int(n)


def _density(config: ExperimentConfig) -> DensityGrid:
    """The configured density, or the constant ``lam`` on the unit cube."""
    f = config.grid()
    if f is not None:
        return f
    return DensityGrid.uniform(Box.cube(1.0, config.dimension), _require_lam(config))


def _probability_density(config: ExperimentConfig) -> DensityGrid:
    f = config.grid()
    if f is None:
        f = DensityGrid.uniform(Box.cube(1.0, config.dimension))
    if not math.isclose(f.total_mass, 1.0, rel_tol=1e-9):
        logger.info("Normalizing the density (total mass %.6g) to a probability density.", f.total_mass)
        f = f.normalized()
    return f


def _scaled_poisson(f: DensityGrid) -> Callable[[float, RngStream], PointCloud]:
    """n ↦ n^{1/d} P(nf)."""
    def sample(n: float, stream: RngStream) -> PointCloud:
        return scale_cloud(sample_inhomogeneous(f.scaled(n), stream), n ** (1 / f.dimension))
    return sample


class LevelTable:
    """σ̂²(λ) and β̂(λ) per density level, cached by (λ, r, kind, k, d).

    σ̂²(λ) is Var[H(P(λ)|_K)]/|K| on one cube K of volume ``level_volume``;
    σ̂²(0) = 0 without sampling.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.volume = config.level_volume or max(config.n_values)
        self.replications = config.level_replications or config.replications
        self.cache: Dict[Tuple, Tuple[float, float, float, Dict[str, float]]] = {}
        self.records: List[ReplicationRecord] = []

    def _homogeneous(self, value: float, volume: float, process: str, *path: int) -> np.ndarray:
        config = self.config
        d = config.dimension
        spec = config.functional

        def one(i: int) -> ReplicationRecord:
            cloud = sample_homogeneous(value, Box.cube(volume ** (1 / d), d), _stream(config, i, LEVELS, *path))
            return timed_record(spec, cloud, i, process, volume)

        records = parallel_map(one, range(self.replications), config.threads)
        self.records.extend(records)
        return np.asarray([r.value for r in records])

    def estimate(self, value: float) -> Tuple[float, float, float, Dict[str, float]]:
        spec = self.config.functional
        key = (value, spec.r, spec.kind, spec.k, self.config.dimension)
        if key in self.cache:
            return self.cache[key]
        if value == 0:
            self.cache[key] = (0.0, 0.0, 0.0, {f"{L:g}": 0.0 for L in self.config.block_volumes})
            return self.cache[key]
        code = int(round(value * 1e6))
        values = self._homogeneous(value, self.volume, f"level-{value:g}", code, 0)
        variance = float(values.var(ddof=1))
        finite = {}
        for j, L in enumerate(self.config.block_volumes):
            block_values = self._homogeneous(value, L, f"level-{value:g}-L{L:g}", code, j + 1)
            finite[f"{L:g}"] = float(block_values.var(ddof=1)) / L
        self.cache[key] = (
            variance / self.volume,
            variance_standard_error(variance, len(values)) / self.volume,
            float(values.mean()) / self.volume,
            finite,
        )
        logger.info("Level %g: sigma2_hat=%.4g", value, self.cache[key][0])
        return self.cache[key]

    def entries(self, f: DensityGrid) -> List[LevelEntry]:
        entries = []
        for value, volume in f.levels():
            sigma2, se, mean, finite = self.estimate(value)
            entries.append(LevelEntry(value, volume, sigma2, se, mean, finite))
        return entries


def _predict(summary: CltSummary, entries: List[LevelEntry]):
    summary.levels = entries
    summary.sigma2 = sum(e.sigma2 * e.volume for e in entries)
    summary.sigma2_se = math.sqrt(sum((e.sigma2_se * e.volume) ** 2 for e in entries))
    summary.slln_prediction = sum(e.mean_per_volume * e.volume for e in entries)


def run_homogeneous_clt(config: ExperimentConfig) -> CltSummary:
    """H(P(λ)|_{[0, n^{1/d})^d}) for every n in the schedule."""
    lam = _require_lam(config)
    d = config.dimension
    records = ordered(_replicate(
        config, "homogeneous", lambda n, stream: sample_homogeneous(lam, Box.cube(n ** (1 / d), d), stream)
    ))
    summary = CltSummary(config.experiment, config.functional, summarize(records), records=records)
    last = summary.rows[-1]
    summary.sigma2, summary.sigma2_se = last.variance_per_n, last.variance_per_n_se
    summary.slln_prediction = last.mean_per_n
    return _finish(summary)


def run_block_approximation(config: ExperimentConfig) -> CltSummary:
    """Var[Y_n - X_{n,L}] where X_{n,L} sums H over lattice cubes of volume L.

    Homogeneous runs keep the cubes entirely inside K_n = [0, n^{1/d})^d; with
    a density the cubes cover the scaled support.
    """
    f = config.grid()
    lam = None if f is not None else _require_lam(config)
    volumes = sorted(config.block_volumes)
    if not volumes:
        raise ValueError("clt-blocks needs a nonempty 'block_volumes' schedule.")
    d = config.dimension
    m = config.replications
    spec = config.functional

    def region(n: float) -> Box:
        scale = n ** (1 / d)
        return Box.cube(scale, d) if f is None else f.support.scaled(scale)

    def one(task) -> List[ReplicationRecord]:
        position, n, i = task
        index = position * m + i
        stream = _stream(config, index, MAIN)
        if f is None:
            cloud = sample_homogeneous(lam, region(n), stream)
        else:
            cloud = _scaled_poisson(f)(n, stream)
        total = timed_record(spec, cloud, index, "total", n)
        out = [total]
        for L in volumes:
            if L > n:
                continue
            blocks = region(n).lattice_blocks(L ** (1 / d), contained_only=f is None)
            x = sum(evaluate(spec, cloud.restrict(block)) for block in blocks)
            out.append(ReplicationRecord(index, f"block-{L:g}", n, total.value - x, len(cloud)))
        return out

    tasks = [(position, n, i) for position, n in enumerate(config.n_values) for i in range(m)]
    records = ordered(chain.from_iterable(parallel_map(one, tasks, config.threads)))
    summary = CltSummary(config.experiment, config.functional,
                         summarize([r for r in records if r.process == "total"]), records=records)
    for n in config.n_values:
        for L in volumes:
            if L > n:
                summary.notice(f"Skipped block volume L={L:g} > n={n:g}.")
                continue
            diffs = np.asarray([r.value for r in records if r.n == n and r.process == f"block-{L:g}"])
            variance = float(diffs.var(ddof=1))
            blocks = len(region(n).lattice_blocks(L ** (1 / d), contained_only=f is None))
            summary.blocks.append(BlockRow(n, L, blocks, variance, variance_standard_error(variance, m), variance / n))
    return _finish(summary)


def run_inhomogeneous_clt(config: ExperimentConfig) -> CltSummary:
    """Var[H(P̃_n)]/n against the cell sum of homogeneous limiting variances."""
    f = _density(config)
    records = ordered(_replicate(config, "poisson", _scaled_poisson(f)))
    summary = CltSummary(config.experiment, config.functional, summarize(records))
    table = LevelTable(config)
    _predict(summary, table.entries(f))
    summary.records = records + ordered(table.records)
    last = summary.rows[-1]
    if summary.sigma2:
        summary.notice(
            f"variance/n {last.variance_per_n:.4g} vs predicted sigma^2 {summary.sigma2:.4g} "
            f"({100 * abs(last.variance_per_n / summary.sigma2 - 1):.1f}% apart)."
        )
    return _finish(summary)


def _paired_records(config: ExperimentConfig, f: DensityGrid) -> List[ReplicationRecord]:
    """Binomial X_n and Poissonized P_n cut from one i.i.d. sequence, both scaled by n^{1/d}."""
    d = config.dimension
    m = config.replications
    spec = config.functional
    q = config.increment_q
    for n in config.n_values:
        _binomial_size(n)

    def one(task) -> List[ReplicationRecord]:
        position, n, i = task
        index = position * m + i
        size = int(n)
        points, count = sample_poissonized_pair(f, size, _stream(config, index, MAIN), extra=1 if q else 0)
        scale = n ** (1 / d)
        binomial = timed_record(spec, PointCloud(d, points[:size] * scale), index, "binomial", n)
        if count == size:
            poisson = ReplicationRecord(index, "poisson", n, binomial.value, binomial.count, binomial.ms)
        else:
            poisson = timed_record(spec, PointCloud(d, points[:count] * scale), index, "poisson", n)
        out = [binomial, poisson]
        if q:
            grown = evaluate(spec, PointCloud(d, points[:size + 1] * scale))
            out.append(ReplicationRecord(index, "increment", n, grown - binomial.value, size + 1))
        return out

    tasks = [(position, n, i) for position, n in enumerate(config.n_values) for i in range(m)]
    return ordered(chain.from_iterable(parallel_map(one, tasks, config.threads)))


def _paired_pvalue(binomial: np.ndarray, poisson: np.ndarray) -> float:
    """One-sided Pitman-Morgan test of Var[binomial] < Var[poisson] on paired draws."""
    total, difference = binomial + poisson, binomial - poisson
    if total.std() == 0 or difference.std() == 0:
        return 1.0
    return float(scipy_stats.pearsonr(total, difference, alternative="less").pvalue)


def _depoissonization_reports(config: ExperimentConfig, records: List[ReplicationRecord],
                              predicted_gap: Optional[float]) -> List[DepoissonizationReport]:
    reports = []
    for n in config.n_values:
        at_n = [r for r in records if r.n == n]
        binomial = np.asarray([r.value for r in at_n if r.process == "binomial"])
        poisson = np.asarray([r.value for r in at_n if r.process == "poisson"])
        counts = np.asarray([r.count for r in at_n if r.process == "poisson"], dtype=float)
        increments = np.asarray([r.value for r in at_n if r.process == "increment"])
        b_var, p_var = float(binomial.var(ddof=1)) / n, float(poisson.var(ddof=1)) / n
        gap = p_var - b_var
        pvalue = _paired_pvalue(binomial, poisson)
        growth = max(
            abs(r.value) / (r.count + n) for r in at_n if r.process in ("binomial", "poisson")
        )
        relative = abs(gap - predicted_gap) / predicted_gap if predicted_gap else None
        reports.append(DepoissonizationReport(
            n=n,
            binomial_variance_per_n=b_var,
            poisson_variance_per_n=p_var,
            gap=gap,
            predicted_gap=predicted_gap,
            gap_relative_error=relative,
            paired_pvalue=pvalue,
            binomial_below_poisson=pvalue < config.alpha,
            count_variance_ratio=float(counts.var(ddof=1)) / n,
            growth_ratio=float(growth),
            increment_moment=(
                float(np.mean(np.abs(increments) ** config.increment_q)) if increments.size else None
            ),
        ))
    return reports


def estimate_delta_bar(config: ExperimentConfig, f: DensityGrid) -> Tuple[float, float]:
    """∫E[Δ(f(x))] f(x) dx over the density levels, with its standard error."""
    total, error = 0.0, 0.0
    for position, (value, volume) in enumerate(f.levels()):
        if value == 0:
            continue
        mean, se = estimate_limit_delta(
            config.functional, value, config.delta_replications, _stream(config, position, DELTA),
            config.dimension, config.stabilization.limit_halfwidth, config.threads,
        )
        total += mean * value * volume
        error += (se * value * volume) ** 2
    return total, math.sqrt(error)


def run_depoissonization(config: ExperimentConfig) -> CltSummary:
    """Paired binomial and Poissonized runs with the predicted τ² = σ² - Δ̄²."""
    f = _probability_density(config)
    records = _paired_records(config, f)
    summary = CltSummary(config.experiment, config.functional,
                         summarize([r for r in records if r.process != "increment"]))
    table = LevelTable(config)
    _predict(summary, table.entries(f))
    summary.delta_bar, summary.delta_bar_se = estimate_delta_bar(config, f)
    tau2 = summary.sigma2 - summary.delta_bar ** 2
    if tau2 < 0:
        summary.tau2_clamped = True
        summary.flag(f"Predicted tau^2 = {tau2:.4g} < 0; clamped to 0.")
        tau2 = 0.0
    summary.tau2 = tau2
    summary.depoissonization = _depoissonization_reports(config, records, summary.delta_bar ** 2)
    summary.records = records + ordered(table.records)
    return _finish(summary)


def run_betti_clt(config: ExperimentConfig) -> CltSummary:
    """Sample, scale, build the Čech complex and take β_k, for both P_n and X_n."""
    spec = config.functional
    if spec.kind != "betti_k":
        raise ValueError(f"betti needs a betti_k functional, got {spec.kind}.")
    spec.validate(config.dimension)
    f = _probability_density(config)
    d = config.dimension

    percolation = None
    if d < 2:
        critical = math.inf
    elif config.percolation.critical_radius is not None:
        critical = config.percolation.critical_radius
    else:
        percolation = estimate_percolation_radius(
            d, config.percolation.sizes, config.percolation.replications, _stream(config, 0, PERCOLATION),
            config.percolation.radii or DEFAULT_RADII, config.threads,
        )
        critical = percolation.radius if percolation.radius is not None else math.inf

    records = _paired_records(config, f)
    summary = CltSummary(config.experiment, spec, summarize([r for r in records if r.process != "increment"]))
    summary.percolation = percolation
    summary.critical_bound = None if math.isinf(critical) else f.sup ** (-1 / d) * critical
    summary.gate_passed = summary.critical_bound is None or spec.r < summary.critical_bound
    if not summary.gate_passed:
        if d == 2:
            summary.notice(
                f"r={spec.r:g} is above the percolation bound {summary.critical_bound:.4g}; "
                "advisory only in d=2."
            )
        else:
            summary.flag(f"r={spec.r:g} is above the percolation bound {summary.critical_bound:.4g}.")
    table = LevelTable(config)
    _predict(summary, table.entries(f))
    summary.records = records + ordered(table.records)
    return _finish(summary)


def cech_of_points(config: ExperimentConfig) -> SimplicialComplex:
    """C(points, r) up to dimension d for the configured point list."""
    if not config.points:
        raise ValueError("betti with a point list needs a nonempty 'points' entry.")
    cloud = PointCloud.from_points(config.points)
    return build_cech(cloud, config.functional.r, cloud.dimension)


def betti_of_points(config: ExperimentConfig, complex_: Optional[SimplicialComplex] = None) -> Dict[str, object]:
    """β_0..β_{d-1}, simplex counts and Euler characteristic of the configured points."""
    if complex_ is None:
        complex_ = cech_of_points(config)
    d = complex_.dimension_cap
    betti = betti_numbers(complex_, d - 1)
    return {
        "r": config.functional.r,
        "points": complex_.vertex_count,
        "betti": list(betti),
        "simplices": [complex_.count(k) for k in range(d + 1)],
        "euler_characteristic": euler_characteristic(complex_),
    }


def run_sample(config: ExperimentConfig) -> PointCloud:
    """One draw of the configured process at the first n of the schedule."""
    n = config.n_values[0]
    d = config.dimension
    stream = _stream(config, 0, MAIN)
    if config.process == "homogeneous":
        return sample_homogeneous(_require_lam(config), Box.cube(n ** (1 / d), d), stream)
    f = _density(config)
    if config.process == "inhomogeneous":
        return sample_inhomogeneous(f.scaled(n), stream)
    if config.process == "poisson":
        return sample_poissonized(f, n, stream)
    return sample_binomial(f, _binomial_size(n), stream)


@dataclass
class ScalingCheck(DataClassJsonMixin):
    statistic: float
    pvalue: float
    alpha: float

    @property
    def accepted(self) -> bool:
        return self.pvalue >= self.alpha


def scaling_check(spec: FunctionalSpec, lam: float, n: float, m: int, rng: RngStream,
                  dimension: int = 2, alpha: float = 0.01, threads: Optional[int] = 1) -> ScalingCheck:
    """H_r on P(λ) in volume n against H_{λ^{1/d} r} on P(1) in volume λn."""
    if not lam > 0:
        raise ValueError(f"The scaling check needs lam > 0, got {lam}.")
    d = dimension
    scaled_spec = spec.with_radius(spec.r * lam ** (1 / d))

    def original(i: int) -> float:
        cloud = sample_homogeneous(lam, Box.cube(n ** (1 / d), d), rng.substream(0).substream(i))
        return evaluate(spec, cloud)

    def rescaled(i: int) -> float:
        cloud = sample_homogeneous(1.0, Box.cube((lam * n) ** (1 / d), d), rng.substream(1).substream(i))
        return evaluate(scaled_spec, cloud)

    a = parallel_map(original, range(m), threads)
    b = parallel_map(rescaled, range(m), threads)
    result = two_sample_ks(a, b)
    return ScalingCheck(result.statistic, result.pvalue, alpha)


@dataclass
class CouplingCheck(DataClassJsonMixin):
    trials: int
    identical: int
    expected: float
    std_error: float

    @property
    def frequency(self) -> float:
        return self.identical / self.trials

    @property
    def passed(self) -> bool:
        """Within three binomial standard errors of exp(-∫|f - g|)."""
        return abs(self.frequency - self.expected) <= 3 * self.std_error


def coupling_check(f: DensityGrid, g: DensityGrid, trials: int, rng: RngStream,
                   threads: Optional[int] = 1) -> CouplingCheck:
    if trials < 1:
        raise ValueError("Need at least one trial.")

    def one(i: int) -> bool:
        a, b = sample_coupled_pair(f, g, rng.substream(i))
        return a.same_as(b)

    identical = sum(parallel_map(one, range(trials), threads))
    expected = coupling_identity_probability(f, g)
    return CouplingCheck(trials, int(identical), expected, binomial_standard_error(expected, trials))


@dataclass
class StabilizationSummary(DataClassJsonMixin):
    lam: float
    traces: int
    settled_fraction: float
    survival: Dict[str, float]
    probes_run: int
    probes_passed: int
    median_cluster_extent: Optional[float]
    delta_mean: float
    delta_std_error: float
    nondegeneracy: NondegeneracyReport
    moments: Optional[dict] = None
    trace_list: List[StabilizationTrace] = field(default_factory=list, repr=False)

    def to_dict(self, encode_json=False) -> dict:
        d = super().to_dict(encode_json)
        d.pop("trace_list", None)
        d["probe_pass_fraction"] = self.probe_pass_fraction
        return d

    @property
    def probe_pass_fraction(self) -> Optional[float]:
        return self.probes_passed / self.probes_run if self.probes_run else None


def run_stabilization(config: ExperimentConfig) -> StabilizationSummary:
    """Nested-window traces, strong stabilization probes, Δ(λ) and moment diagnostics."""
    lam = _require_lam(config)
    spec = config.functional
    settings = config.stabilization
    d = config.dimension

    def one(i: int):
        trace = trace_add_one_cost(spec, lam, settings.max_halfwidth, settings.steps, _stream(config, i, MAIN), d)
        probe = strong_stabilization_probe(spec, trace, _stream(config, i, PROBE), settings.injected)
        return trace, probe

    results = parallel_map(one, range(config.replications), config.threads)
    traces = [trace for trace, _ in results]
    probes = [probe for _, probe in results if probe is not None]
    halfwidths = traces[0].halfwidths
    survival = settle_survival(traces, halfwidths)

    samples = limit_delta_samples(spec, lam, config.delta_replications, _stream(config, 0, DELTA),
                                  d, settings.limit_halfwidth, config.threads)
    table = None
    f = config.grid()
    if f is not None:
        table = moment_diagnostic(spec, f, config.n_values, settings.moment_p, _stream(config, 0, LEVELS),
                                  replications=settings.moment_replications).to_dict()
    summary = StabilizationSummary(
        lam=lam,
        traces=len(traces),
        settled_fraction=sum(t.settled for t in traces) / len(traces),
        survival={f"{h:g}": p for h, p in zip(halfwidths, survival)},
        probes_run=len(probes),
        probes_passed=sum(p.passed for p in probes),
        median_cluster_extent=float(np.median([p.cluster_extent for p in probes])) if probes else None,
        delta_mean=float(samples.mean()),
        delta_std_error=float(samples.std(ddof=1) / math.sqrt(len(samples))) if len(samples) > 1 else 0.0,
        nondegeneracy=nondegeneracy(samples),
        moments=table,
        trace_list=traces,
    )
    if summary.probes_run and summary.probes_passed < summary.probes_run:
        logger.warning("D_0 changed in %d of %d strong stabilization probes.",
                       summary.probes_run - summary.probes_passed, summary.probes_run)
    return summary


def run_percolation(config: ExperimentConfig) -> PercolationEstimate:
    settings = config.percolation
    return estimate_percolation_radius(
        config.dimension, settings.sizes, settings.replications, _stream(config, 0, PERCOLATION),
        settings.radii or DEFAULT_RADII, config.threads,
    )
