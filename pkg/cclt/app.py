import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional

import rich
import typer
from rich import print
from rich.panel import Panel
from rich.table import Table
from typer import Option
from typing_extensions import Annotated

from cclt.config import ConfigError, ExperimentConfig, load_config
from cclt.harness import (
    CltSummary,
    betti_of_points,
    cech_of_points,
    coupling_check,
    run_betti_clt,
    run_block_approximation,
    run_depoissonization,
    run_homogeneous_clt,
    run_inhomogeneous_clt,
    run_percolation,
    run_sample,
    run_stabilization,
)
from cclt.point_process import RngStream
from cclt.runner import RECORD_COLUMNS, TIMING_COLUMNS, ReplicationRecord
from cclt.store import Store

logger = logging.getLogger(__name__)

cli = typer.Typer(
    help="Simulation and verification toolkit for CLTs of stabilizing functionals.",
    no_args_is_help=True,
    add_completion=False,
)

ConfigPath = Annotated[Path, Option("--config", "-c", help="Experiment config file (JSON, or YAML by suffix).")]
Seed = Annotated[Optional[int], Option("--seed", "-s", help="Override the master seed.")]
Threads = Annotated[Optional[int], Option("--threads", "-t", help="Worker count (default: all cores).")]
Out = Annotated[Optional[Path], Option("--out", "-o", help="Output directory.")]
Assignments = Annotated[
    Optional[str], Option("--set", help="Override config values (kv in the form of 'name1=value1,name2=value2').")
]


@dataclass
class App:
    """One invocation: the resolved config and the output store it writes to."""

    command: str
    config: ExperimentConfig
    store: Store

    @classmethod
    def start(cls, command: str, config: ExperimentConfig) -> "App":
        try:
            store = Store(Path(config.output_dir))
            store.open(command, config)
        except OSError as e:
            print(f"[red]Cannot write to {config.output_dir}: {e.strerror}[/red]")
            raise typer.Exit(3)
        logger.info("Starting %s (config %s, seed %d)", command, config.hash[:12], config.master_seed)
        return cls(command, config, store)

    def write_records(self, records: List[ReplicationRecord]):
        self.store.write_csv("records.csv", RECORD_COLUMNS, (r.row() for r in records))
        self.store.write_csv("timings.csv", TIMING_COLUMNS, (r.timing() for r in records))

    def write_summary(self, summary: dict):
        self.store.write_json("summary.json", summary)


def _resolve(command: str, config_path: Path, seed: Optional[int], threads: Optional[int],
             out: Optional[Path], assignments: Optional[str]) -> ExperimentConfig:
    try:
        return load_config(config_path).override(seed, threads, out, command, assignments)
    except ConfigError as e:
        if e.path is None:
            e.path = config_path
        print(f"[red]{e}[/red]")
        raise typer.Exit(2)


def _execute(command: str, config: ExperimentConfig):
    app = App.start(command, config)
    try:
        COMMANDS[command](app)
    except OSError as e:
        print(f"[red]Cannot write outputs: {e}[/red]")
        raise typer.Exit(3)
    except ValueError as e:
        print(f"[red]{e}[/red]")
        raise typer.Exit(2)
    finally:
        app.store.close()
    print(f"Outputs in [bold]{app.store.output_dir}[/bold]")


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.4g}"


def print_summary(summary: CltSummary):
    table = Table(
        "process", "n", "m", "mean/n", "var/n", "± se", "KS", "p", "skew", "kurt",
        box=rich.box.MINIMAL_DOUBLE_HEAD,
        title=f"{summary.experiment}: {summary.functional.label}, r={summary.functional.r:g}",
        title_justify="left",
        title_style="bold blue",
    )
    for row in summary.rows:
        table.add_row(
            row.process, f"{row.n:g}", str(row.replications), _fmt(row.mean_per_n), _fmt(row.variance_per_n),
            _fmt(row.variance_per_n_se), _fmt(row.ks_statistic), _fmt(row.ks_pvalue),
            _fmt(row.skewness), _fmt(row.kurtosis),
        )
    print(table)
    lines = []
    if summary.sigma2 is not None:
        lines.append(f"sigma^2 = {_fmt(summary.sigma2)} ± {_fmt(summary.sigma2_se)}")
    if summary.delta_bar is not None:
        lines.append(f"delta_bar = {_fmt(summary.delta_bar)} ± {_fmt(summary.delta_bar_se)}")
    if summary.tau2 is not None:
        lines.append(f"tau^2 = {_fmt(summary.tau2)}" + (" (clamped)" if summary.tau2_clamped else ""))
    if summary.slln_prediction is not None:
        lines.append(f"mean/n prediction = {_fmt(summary.slln_prediction)}")
    for block in summary.blocks:
        lines.append(f"n={block.n:g} L={block.block_volume:g}: Var[Y-X]/n = {_fmt(block.variance_per_n)}")
    for report in summary.depoissonization:
        lines.append(
            f"n={report.n:g}: gap {_fmt(report.gap)} vs predicted {_fmt(report.predicted_gap)}, "
            f"paired p={_fmt(report.paired_pvalue)}, Var[N]/n={_fmt(report.count_variance_ratio)}"
        )
    if summary.critical_bound is not None:
        lines.append(f"percolation bound = {_fmt(summary.critical_bound)} (gate {'passed' if summary.gate_passed else 'failed'})")
    lines += [f"[yellow]{notice}[/yellow]" for notice in summary.notices]
    lines += [f"[red]{flag}[/red]" for flag in summary.flags]
    if lines:
        print(Panel.fit("\n".join(lines), title="Estimates", border_style="bold magenta"))


def _clt(run: Callable[[ExperimentConfig], CltSummary]) -> Callable[[App], None]:
    def body(app: App):
        summary = run(app.config)
        app.write_records(summary.records)
        app.write_summary(summary.to_dict())
        print_summary(summary)
    return body


def _sample(app: App):
    cloud = run_sample(app.config)
    columns = [f"x{i}" for i in range(cloud.dimension)]
    app.store.write_csv("points.csv", columns, ({c: repr(float(x)) for c, x in zip(columns, p)} for p in cloud.points))
    app.write_summary({"process": app.config.process, "n": app.config.n_values[0], "points": len(cloud)})
    print(f"Sampled [bold]{len(cloud)}[/bold] points ({app.config.process}).")


def _betti(app: App):
    if not app.config.points:
        _clt(run_betti_clt)(app)
        return
    complex_ = cech_of_points(app.config)
    app.store.write_json("complex.json", complex_.to_dict())
    result = betti_of_points(app.config, complex_)
    app.write_summary(result)
    table = Table("k", "β_k", "simplices", box=rich.box.MINIMAL_DOUBLE_HEAD, title=f"r={result['r']:g}")
    for k, simplices in enumerate(result["simplices"]):
        betti = result["betti"][k] if k < len(result["betti"]) else "-"
        table.add_row(str(k), str(betti), str(simplices))
    print(table)
    print(f"β = ({', '.join(str(b) for b in result['betti'])}), χ = {result['euler_characteristic']}")


def _stabilization(app: App):
    summary = run_stabilization(app.config)
    rows = [row for index, trace in enumerate(summary.trace_list) for row in trace.rows(index)]
    app.store.write_csv("traces.csv", ["trace", "halfwidth", "volume", "d0"], rows)
    app.write_summary(summary.to_dict())
    table = Table("t", "P(settle > t)", box=rich.box.MINIMAL_DOUBLE_HEAD, title="Settle radius survival")
    for t, p in summary.survival.items():
        table.add_row(t, _fmt(p))
    print(table)
    print(Panel.fit(
        f"settled: {_fmt(summary.settled_fraction)} of {summary.traces}\n"
        f"D_0 unchanged under injection: {summary.probes_passed}/{summary.probes_run} "
        f"(median cluster extent {_fmt(summary.median_cluster_extent)})\n"
        f"Δ(λ) ≈ {_fmt(summary.delta_mean)} ± {_fmt(summary.delta_std_error)} "
        f"({summary.nondegeneracy.distinct_values} distinct values)",
        title="Stabilization",
        border_style="bold magenta",
    ))


def _percolation(app: App):
    estimate = run_percolation(app.config)
    rows = [
        {"side": curve.side, "r": r, "fraction": p, "std_error": se}
        for curve in estimate.curves
        for r, p, se in zip(curve.radii, curve.fractions, curve.std_errors)
    ]
    app.store.write_csv("spanning.csv", ["side", "r", "fraction", "std_error"], rows)
    app.write_summary(estimate.to_dict())
    table = Table("side", "r_c", "band", "monotone", box=rich.box.MINIMAL_DOUBLE_HEAD, title="Percolation radius")
    for curve in estimate.curves:
        table.add_row(f"{curve.side:g}", _fmt(curve.estimate), f"[{_fmt(curve.band[0])}, {_fmt(curve.band[1])}]",
                      str(curve.monotone))
    print(table)
    print(f"Relative finite-size drift: {_fmt(estimate.relative_drift)}")


def _coupling(app: App):
    config = app.config
    f, g = config.grid("density"), config.grid("density_g")
    if f is None or g is None:
        raise ValueError("coupling-check needs both 'density' and 'density_g'.")
    check = coupling_check(f, g, config.trials, RngStream(config.master_seed, 0), config.threads)
    app.write_summary({**check.to_dict(), "frequency": check.frequency, "passed": check.passed})
    print(Panel.fit(
        f"identical in {check.identical}/{check.trials} trials ({_fmt(check.frequency)}), "
        f"expected {_fmt(check.expected)} ± {_fmt(check.std_error)}: "
        + ("[green]passed[/green]" if check.passed else "[red]failed[/red]"),
        title="Coupling",
        border_style="bold magenta",
    ))


COMMANDS: Dict[str, Callable[[App], None]] = {
    "sample": _sample,
    "betti": _betti,
    "clt-homogeneous": _clt(run_homogeneous_clt),
    "clt-blocks": _clt(run_block_approximation),
    "clt-poisson": _clt(run_inhomogeneous_clt),
    "clt-binomial": _clt(run_depoissonization),
    "stabilization": _stabilization,
    "percolation": _percolation,
    "coupling-check": _coupling,
}


@cli.command()
@cli.command(name="s", hidden=True)
def sample(config: ConfigPath, seed: Seed = None, threads: Threads = None, out: Out = None,
           assign: Assignments = None):
    "(s) Draw one point cloud from the configured process and write it as CSV."
    _execute("sample", _resolve("sample", config, seed, threads, out, assign))


@cli.command()
@cli.command(name="b", hidden=True)
def betti(config: ConfigPath, seed: Seed = None, threads: Threads = None, out: Out = None,
          assign: Assignments = None):
    "(b) Betti numbers of the configured points, or the full Betti CLT pipeline."
    _execute("betti", _resolve("betti", config, seed, threads, out, assign))


@cli.command(name="clt-homogeneous")
@cli.command(name="ch", hidden=True)
def clt_homogeneous(config: ConfigPath, seed: Seed = None, threads: Threads = None, out: Out = None,
                    assign: Assignments = None):
    "(ch) Variance/n and normality of H on homogeneous Poisson processes in growing cubes."
    _execute("clt-homogeneous", _resolve("clt-homogeneous", config, seed, threads, out, assign))


@cli.command(name="clt-blocks")
@cli.command(name="cb", hidden=True)
def clt_blocks(config: ConfigPath, seed: Seed = None, threads: Threads = None, out: Out = None,
               assign: Assignments = None):
    "(cb) Variance of the difference between H and its sum over lattice blocks."
    _execute("clt-blocks", _resolve("clt-blocks", config, seed, threads, out, assign))


@cli.command(name="clt-poisson")
@cli.command(name="cp", hidden=True)
def clt_poisson(config: ConfigPath, seed: Seed = None, threads: Threads = None, out: Out = None,
                assign: Assignments = None):
    "(cp) Inhomogeneous Poisson CLT against the level-wise variance integral."
    _execute("clt-poisson", _resolve("clt-poisson", config, seed, threads, out, assign))


@cli.command(name="clt-binomial")
@cli.command(name="cn", hidden=True)
def clt_binomial(config: ConfigPath, seed: Seed = None, threads: Threads = None, out: Out = None,
                 assign: Assignments = None):
    "(cn) Paired binomial and Poissonized runs with the de-Poissonized variance."
    _execute("clt-binomial", _resolve("clt-binomial", config, seed, threads, out, assign))


@cli.command()
@cli.command(name="st", hidden=True)
def stabilization(config: ConfigPath, seed: Seed = None, threads: Threads = None, out: Out = None,
                  assign: Assignments = None):
    "(st) Add-one cost traces, settle radii, strong stabilization probes and Δ(λ)."
    _execute("stabilization", _resolve("stabilization", config, seed, threads, out, assign))


@cli.command()
@cli.command(name="pc", hidden=True)
def percolation(config: ConfigPath, seed: Seed = None, threads: Threads = None, out: Out = None,
                assign: Assignments = None):
    "(pc) Estimate the percolation radius from spanning on tori."
    _execute("percolation", _resolve("percolation", config, seed, threads, out, assign))


@cli.command(name="coupling-check")
@cli.command(name="cc", hidden=True)
def coupling(config: ConfigPath, seed: Seed = None, threads: Threads = None, out: Out = None,
             assign: Assignments = None):
    "(cc) Identity frequency of coupled Poisson processes against exp(-∫|f-g|)."
    _execute("coupling-check", _resolve("coupling-check", config, seed, threads, out, assign))


@cli.command()
@cli.command(name="r", hidden=True)
def rerun(
    manifest_dir: Annotated[Path, typer.Argument(help="Directory holding a manifest.json.")],
    threads: Threads = None,
    out: Out = None,
):
    "(r) Repeat a finished run from its manifest."
    try:
        manifest = Store.load_manifest(manifest_dir)
        config = manifest.reproduce().override(threads=threads, out=out)
    except (OSError, ValueError) as e:
        print(f"[red]Cannot reproduce {manifest_dir}: {e}[/red]")
        raise typer.Exit(2)
    _execute(manifest.command, config)
