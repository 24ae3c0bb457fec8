import datetime
import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml
from dataclasses_json import DataClassJsonMixin
from rich.logging import RichHandler

from cclt.functionals import FunctionalSpec
from cclt.point_process import DensityGrid

EXPERIMENTS = (
    "sample",
    "betti",
    "clt-homogeneous",
    "clt-blocks",
    "clt-poisson",
    "clt-binomial",
    "stabilization",
    "percolation",
    "coupling-check",
)
PROCESSES = ("inhomogeneous", "poisson", "binomial", "homogeneous")
# Settings that change how a run executes but not what it computes.
EXECUTION_KEYS = ("threads", "output_dir")

logger = logging.getLogger(__name__)


def setup_logging():
    """Log to a timestamped file under /tmp/cclt/logs, or to the console when CCLT_DEBUG is set."""
    log_path = Path(os.environ.get("CCLT_LOG_DIR", "/tmp/cclt/logs"))
    fmt = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    datefmt = "%Y-%m-%d %H:%M:%S"

    if os.environ.get("CCLT_DEBUG", False):
        logging.basicConfig(
            format="%(message)s",
            datefmt=datefmt,
            level=logging.DEBUG,
            handlers=[RichHandler(rich_tracebacks=True)],
        )
        return
    log_path.mkdir(parents=True, exist_ok=True)
    timestamp = datetime.datetime.now().replace(microsecond=0).isoformat()
    logging.basicConfig(
        filename=log_path / f"{timestamp}.log",
        format=fmt,
        datefmt=datefmt,
        level=logging.INFO,
    )


class ConfigError(ValueError):
    """A config problem, anchored as ``path:line:column: message`` once the file is known."""

    def __init__(self, message: str, path: Optional[Union[str, Path]] = None,
                 line: int = 1, column: int = 1, key: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.path = path
        self.line = line
        self.column = column
        self.key = key

    def __str__(self) -> str:
        if self.path is None:
            return self.message
        return f"{self.path}:{self.line}:{self.column}: {self.message}"


@dataclass
class StabilizationSettings(DataClassJsonMixin):
    max_halfwidth: float = 3.0
    steps: int = 12
    injected: int = 10
    limit_halfwidth: float = 4.0
    moment_p: float = 3.0
    moment_replications: int = 20


@dataclass
class PercolationSettings(DataClassJsonMixin):
    sizes: List[float] = field(default_factory=lambda: [20.0, 40.0])
    replications: int = 100
    radii: Optional[List[float]] = None
    # Skips the estimate when the critical radius is already known.
    critical_radius: Optional[float] = None


@dataclass
class ExperimentConfig(DataClassJsonMixin):
    experiment: str = "clt-homogeneous"
    functional: FunctionalSpec = field(default_factory=FunctionalSpec)
    dimension: int = 2
    lam: Optional[float] = None
    density: Optional[Dict[str, Any]] = None
    density_g: Optional[Dict[str, Any]] = None
    n_values: List[float] = field(default_factory=lambda: [100.0])
    block_volumes: List[float] = field(default_factory=list)
    replications: int = 100
    level_replications: Optional[int] = None
    level_volume: Optional[float] = None
    delta_replications: int = 200
    increment_q: Optional[float] = None
    process: str = "inhomogeneous"
    points: Optional[List[List[float]]] = None
    trials: int = 1000
    alpha: float = 0.01
    master_seed: int = 0
    threads: Optional[int] = None
    output_dir: str = "cclt-out"
    stabilization: StabilizationSettings = field(default_factory=StabilizationSettings)
    percolation: PercolationSettings = field(default_factory=PercolationSettings)

    def __post_init__(self):
        self.n_values = [float(n) for n in self.n_values]
        self.block_volumes = [float(v) for v in self.block_volumes]
        if self.lam is not None:
            self.lam = float(self.lam)

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}", key="experiment")
        if self.dimension < 1:
            raise ConfigError(f"dimension must be positive, got {self.dimension}", key="dimension")
        if self.replications < 2:
            raise ConfigError(f"replications must be at least 2, got {self.replications}", key="replications")
        if not self.n_values or any(n <= 0 for n in self.n_values):
            raise ConfigError("n_values must be a nonempty list of positive numbers", key="n_values")
        if any(b <= a for a, b in zip(self.n_values, self.n_values[1:])):
            raise ConfigError(f"n_values must be increasing, got {self.n_values}", key="n_values")
        if any(v <= 0 for v in self.block_volumes):
            raise ConfigError("block_volumes must be positive", key="block_volumes")
        if self.lam is not None and self.lam < 0:
            raise ConfigError(f"lam must be nonnegative, got {self.lam}", key="lam")
        if self.process not in PROCESSES:
            raise ConfigError(f"unknown process {self.process!r}; expected one of {PROCESSES}", key="process")
        if self.threads is not None and self.threads < 1:
            raise ConfigError(f"threads must be at least 1, got {self.threads}", key="threads")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}", key="alpha")
        if self.increment_q is not None and self.increment_q <= 0:
            raise ConfigError("increment_q must be positive", key="increment_q")
        try:
            self.functional.validate(self.dimension)
        except ValueError as e:
            raise ConfigError(str(e), key="functional") from e
        for key in ("density", "density_g"):
            try:
                grid = self.grid(key)
            except (ValueError, KeyError, TypeError) as e:
                raise ConfigError(f"invalid {key}: {e}", key=key) from e
            if grid is not None and grid.dimension != self.dimension:
                raise ConfigError(f"{key} has dimension {grid.dimension}, expected {self.dimension}", key=key)
        if self.points is not None and any(len(p) != self.dimension for p in self.points):
            raise ConfigError(f"every point needs {self.dimension} coordinates", key="points")
        return self

    def grid(self, key: str = "density") -> Optional[DensityGrid]:
        data = getattr(self, key)
        return None if data is None else DensityGrid.from_dict(data)

    def canonical(self) -> str:
        d = {k: v for k, v in self.to_dict().items() if k not in EXECUTION_KEYS}
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    @staticmethod
    def arg2dict(args: Optional[str]) -> Dict[str, str]:
        d: Dict[str, str] = {}
        if not args or "=" not in args:
            return d
        for arg in args.split(","):
            k, v = arg.split("=", 1)
            d[k.strip()] = v.strip()
        return d

    @staticmethod
    def _update(key: str, value: str, d: dict):
        """Set a (dotted) key from its command-line spelling."""
        if value in ["True", "False", "true", "false"]:
            parsed: Any = value in ["True", "true"]
        elif value in ["None", "null"]:
            parsed = None
        elif re.fullmatch(r"-?\d+", value):
            parsed = int(value)
        elif re.fullmatch(r"-?(\d+\.\d*|\.\d+|\d+)([eE]-?\d+)?", value):
            parsed = float(value)
        elif value.startswith("["):
            parsed = json.loads(value)
        else:
            parsed = value
        *parents, leaf = key.split(".")
        for parent in parents:
            d = d.setdefault(parent, {})
        d[leaf] = parsed

    def override(self, seed: Optional[int] = None, threads: Optional[int] = None,
                 out: Optional[Union[str, Path]] = None, experiment: Optional[str] = None,
                 assignments: Optional[str] = None) -> "ExperimentConfig":
        d = self.to_dict()
        for key, value in self.arg2dict(assignments).items():
            self._update(key, value, d)
        if seed is not None:
            d["master_seed"] = seed
        if threads is not None:
            d["threads"] = threads
        if out is not None:
            d["output_dir"] = str(out)
        if experiment is not None:
            d["experiment"] = experiment
        return _from_dict(d).validate()


def _known_keys(d: dict):
    known = {f.name for f in fields(ExperimentConfig)}
    for key in d:
        if key not in known:
            raise ConfigError(f"unknown key {key!r}", key=key)
    for section, cls in (("stabilization", StabilizationSettings), ("percolation", PercolationSettings),
                         ("functional", FunctionalSpec)):
        if isinstance(d.get(section), dict):
            allowed = {f.name for f in fields(cls)}
            for key in d[section]:
                if key not in allowed:
                    raise ConfigError(f"unknown key {section}.{key}", key=key)


def _from_dict(d: Any) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("the config must be a mapping")
    _known_keys(d)
    try:
        return ExperimentConfig.from_dict(d)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError, AttributeError) as e:
        key = next((k for k in ("functional", "stabilization", "percolation") if k in d), None)
        raise ConfigError(f"invalid config: {e}", key=key) from e


def _locate(text: str, key: Optional[str]) -> tuple:
    """Line and column of the first mention of ``key``."""
    if not key:
        return 1, 1
    pattern = re.compile(rf"[\"']?{re.escape(key)}[\"']?\s*:")
    for number, line in enumerate(text.splitlines(), start=1):
        match = pattern.search(line)
        if match:
            return number, match.start() + 1
    return 1, 1


def _parse(text: str, path: Path) -> Any:
    if path.suffix in (".yaml", ".yml"):
        try:
            return yaml.safe_load(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            line, column = (mark.line + 1, mark.column + 1) if mark else (1, 1)
            raise ConfigError(getattr(e, "problem", None) or str(e), path, line, column) from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(e.msg, path, e.lineno, e.colno) from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", path) from e
    data = _parse(text, path)
    try:
        config = _from_dict(data).validate()
    except ConfigError as e:
        line, column = _locate(text, e.key)
        raise ConfigError(e.message, path, line, column, e.key) from e
    logger.info("Loaded config %s (hash %s)", path, config.hash[:12])
    return config


def config_from_text(text: str, suffix: str = ".json") -> ExperimentConfig:
    """Parse a config held in memory; errors are anchored to ``<string>``."""
    path = Path(f"<string>{suffix}")
    data = _parse(text, path)
    try:
        return _from_dict(data).validate()
    except ConfigError as e:
        line, column = _locate(text, e.key)
        raise ConfigError(e.message, path, line, column, e.key) from e
