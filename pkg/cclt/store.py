import csv
import datetime
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from dataclasses_json import DataClassJsonMixin

from cclt import __version__
from cclt.config import ExperimentConfig

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1"


def _now() -> str:
    return datetime.datetime.now().replace(microsecond=0).isoformat()


@dataclass
class RunManifest(DataClassJsonMixin):
    """Everything needed to rerun an experiment and check its outputs."""

    command: str
    config_hash: str
    config: Dict[str, Any]
    master_seed: int
    tool_version: str = __version__
    schema_version: str = SCHEMA_VERSION
    started: str = field(default_factory=_now)
    finished: Optional[str] = None
    outputs: List[str] = field(default_factory=list)
    columns: Dict[str, List[str]] = field(default_factory=dict)

    @classmethod
    def for_config(cls, command: str, config: ExperimentConfig) -> "RunManifest":
        return cls(command, config.hash, config.to_dict(), config.master_seed)

    def reproduce(self) -> ExperimentConfig:
        config = ExperimentConfig.from_dict(self.config).validate()
        if config.hash != self.config_hash:
            raise ValueError("Manifest config does not match its hash.")
        return config


@dataclass
class Store:
    """
    An output directory for one run.

    Files are written whole; the manifest is rewritten last so it always lists
    every output that exists.
    """

    output_dir: Path
    manifest: Optional[RunManifest] = None

    def __post_init__(self):
        self.output_dir = Path(self.output_dir).expanduser()
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def _track(self, name: str, columns: Optional[List[str]] = None):
        if self.manifest is None:
            return
        if name not in self.manifest.outputs:
            self.manifest.outputs.append(name)
        if columns is not None:
            self.manifest.columns[name] = list(columns)

    def write_csv(self, name: str, columns: List[str], rows: Iterable[dict]) -> Path:
        path = self.output_dir / name
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
        self._track(name, columns)
        logger.info("Wrote %s", path)
        return path

    def write_json(self, name: str, data: Any) -> Path:
        path = self.output_dir / name
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
        self._track(name)
        logger.info("Wrote %s", path)
        return path

    def open(self, command: str, config: ExperimentConfig) -> RunManifest:
        self.manifest = RunManifest.for_config(command, config)
        self.save_manifest()
        return self.manifest

    def save_manifest(self):
        if self.manifest is None:
            return
        (self.output_dir / "manifest.json").write_text(
            json.dumps(self.manifest.to_dict(), indent=2, sort_keys=True) + "\n"
        )

    def close(self):
        if self.manifest is not None:
            self.manifest.finished = _now()
            self.save_manifest()

    @staticmethod
    def load_manifest(output_dir: Path) -> RunManifest:
        return RunManifest.from_dict(json.loads((Path(output_dir) / "manifest.json").read_text()))
