"""Replication plumbing: records, timing and the joblib worker pool."""

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, TypeVar

from dataclasses_json import DataClassJsonMixin
from joblib import Parallel, cpu_count, delayed

from cclt.functionals import FunctionalSpec, evaluate
from cclt.point_process import PointCloud

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

RECORD_COLUMNS = ["index", "process", "n", "value", "count"]
TIMING_COLUMNS = ["index", "ms"]


@dataclass
class ReplicationRecord(DataClassJsonMixin):
    index: int
    process: str
    n: float
    value: float
    count: int
    ms: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.value) and math.isfinite(self.n)):
            raise ValueError(f"Replication {self.index} produced a non-finite value.")

    def row(self) -> dict:
        """The deterministic columns; wall time is kept out."""
        return {"index": self.index, "process": self.process, "n": self.n, "value": self.value, "count": self.count}

    def timing(self) -> dict:
        return {"index": self.index, "ms": round(self.ms, 3)}


def workers(threads: Optional[int]) -> int:
    """Worker count, defaulting to the machine's parallelism."""
    if threads is None:
        return cpu_count()
    if threads < 1:
        raise ValueError(f"threads must be at least 1, got {threads}.")
    return threads


def parallel_map(function: Callable[[T], R], items: Iterable[T], threads: Optional[int] = 1) -> List[R]:
    """``[function(x) for x in items]``, computed on a joblib pool; order is kept."""
    items = list(items)
    n_jobs = min(workers(threads), max(len(items), 1))
    if n_jobs == 1:
        return [function(item) for item in items]
    logger.debug("Dispatching %d tasks to %d workers", len(items), n_jobs)
    return Parallel(n_jobs=n_jobs)(delayed(function)(item) for item in items)


def timed_record(spec: FunctionalSpec, cloud: PointCloud, index: int, process: str, n: float) -> ReplicationRecord:
    start = time.perf_counter()
    value = evaluate(spec, cloud)
    elapsed = (time.perf_counter() - start) * 1000
    return ReplicationRecord(index, process, n, float(value), len(cloud), elapsed)


def ordered(records: Iterable[ReplicationRecord]) -> List[ReplicationRecord]:
    records = sorted(records, key=lambda record: (record.index, record.process))
    keys = [(record.index, record.process) for record in records]
    if len(set(keys)) != len(keys):
        raise ValueError("Replication indices must be unique per process.")
    return records
