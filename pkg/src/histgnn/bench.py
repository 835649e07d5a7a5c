"""Serial vs prefetching epoch timing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Dataset
from .model import GNNModel, ModelSpec
from .partition import Partitioning
from .trainer import EpochStats, Trainer, gas_epoch

__all__ = ["BenchResult", "runtime_benchmark"]


@dataclass
class BenchResult:
    serial: list  # wall time per epoch
    prefetch: list
    identical: bool

    @property
    def ratio(self) -> float:
        """Median prefetching epoch time over median serial epoch time."""
        return float(np.median(self.prefetch) / np.median(self.serial))


def _run(spec: ModelSpec, dataset: Dataset, part: Partitioning, epochs: int, prefetch: bool):
    tr = Trainer(GNNModel(spec), dataset, part, prefetch=prefetch)
    times = []
    for e in range(epochs):
        stats = EpochStats()
        gas_epoch(tr.model, dataset, part, tr.store, tr.opt, e, tr.props, prefetch=prefetch, stats=stats)
        times.append(stats.wall_time)
    tr.close()
    return times, tr.model.state_dict()


def runtime_benchmark(dataset: Dataset, part: Partitioning, spec: ModelSpec, epochs: int = 3,
                      repeats: int = 3) -> BenchResult:
    """Alternate serial and prefetching runs; parameters must match bit for bit."""
    serial, prefetch = [], []
    identical = True
    for _ in range(repeats):
        ts, ps = _run(spec, dataset, part, epochs, prefetch=False)
        tp, pp = _run(spec, dataset, part, epochs, prefetch=True)
        serial += ts
        prefetch += tp
        identical &= all(np.array_equal(a, b) for a, b in zip(ps, pp))
    return BenchResult(serial, prefetch, identical)
