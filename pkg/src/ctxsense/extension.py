"""Data extension: synthetic stale records paired with per-sensor distances.

Every eligible actual record ``t`` (``t >= max_dist``) expands into a block of
``1 + max_dist + k`` rows:

* the actual record itself, distances all zero;
* one systematic row per ``dist`` in ``1..max_dist`` where every sensor is
  read from record ``t - dist``;
* ``k`` random rows where each sensor independently reads from record
  ``t - dist_s`` with ``dist_s ~ Uniform{1..max_dist}``.

Records are chronological, so "older" means a smaller index.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .trace import Trace, layout_columns


@dataclass(frozen=True)
class ExtensionConfig:
    max_dist: int = 32
    k: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.max_dist < 1:
            raise ValueError("max_dist must be >= 1")
        if self.k < 0:
            raise ValueError("k must be >= 0")

    @property
    def block_size(self) -> int:
        return 1 + self.max_dist + self.k


@dataclass(frozen=True)
class ExtendedRecord:
    values: np.ndarray
    distances: np.ndarray
    actual_index: int


@dataclass(frozen=True)
class ExtendedDataset:
    """Array-backed list of :class:`ExtendedRecord`.

    ``actual_index`` holds the trace position of the actual record each row
    derives from; rows are grouped in consecutive blocks of ``block_size``.
    """

    values: np.ndarray
    distances: np.ndarray
    actual_index: np.ndarray
    config: ExtensionConfig
    sensor_names: tuple[str, ...]

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, i: int) -> ExtendedRecord:
        return ExtendedRecord(self.values[i], self.distances[i], int(self.actual_index[i]))

    def __iter__(self) -> Iterator[ExtendedRecord]:
        for i in range(len(self)):
            yield self[i]

    @property
    def n_blocks(self) -> int:
        return len(self) // self.config.block_size


def _row_sources(n_records: int, config: ExtensionConfig, n_sensors: int):
    """Source record index per (row, sensor) and the matching distances."""
    md, k = config.max_dist, config.k
    actual = np.arange(md, n_records)
    # distance template for one block: zeros, then 1..md for every sensor
    sys_d = np.repeat(np.arange(0, md + 1)[:, None], n_sensors, axis=1)
    blocks = []
    for t in actual:
        if k:
            rng = np.random.default_rng([config.seed, int(t)])
            rand_d = rng.integers(1, md + 1, size=(k, n_sensors))
            blocks.append(np.vstack([sys_d, rand_d]))
        else:
            blocks.append(sys_d)
    dist = np.concatenate(blocks) if blocks else np.empty((0, n_sensors), dtype=np.int64)
    owner = np.repeat(actual, config.block_size)
    return owner, dist.astype(np.int64)


def extend(trace: Trace, config: ExtensionConfig) -> ExtendedDataset:
    if len(trace) <= config.max_dist:
        raise ValueError(
            f"trace has {len(trace)} records; need more than max_dist={config.max_dist}"
        )
    m = trace.n_sensors
    owner, dist = _row_sources(len(trace), config, m)
    values = np.empty((owner.size, trace.n_features))
    for s, sl in enumerate(trace.slices):
        values[:, sl] = trace.values[owner - dist[:, s], sl]
    return ExtendedDataset(values, dist, owner, config, tuple(s.name for s in trace.sensors))


def actual_index_of(extended_index: int, config: ExtensionConfig, n_rows: int | None = None) -> int:
    """Eligible-record number (0-based) of an extended row."""
    if extended_index < 0 or (n_rows is not None and extended_index >= n_rows):
        raise IndexError(f"extended index {extended_index} out of range")
    return extended_index // config.block_size


def write_extended(data: ExtendedDataset, path: str | Path, value_columns: list[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(value_columns + [f"dist.{s}" for s in data.sensor_names] + ["actual_index"])
        for v, d, a in zip(data.values, data.distances, data.actual_index):
            w.writerow([repr(float(x)) for x in v] + [int(x) for x in d] + [int(a)])


def read_extended(path: str | Path, trace: Trace, config: ExtensionConfig) -> ExtendedDataset:
    cols = layout_columns(trace.sensors)
    m, f = trace.n_sensors, trace.n_features
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = cols + [f"dist.{s.name}" for s in trace.sensors] + ["actual_index"]
        if header != expected:
            raise ValueError(f"{path}: unexpected header")
        rows = np.array([[float(x) for x in r] for r in reader if r], dtype=float)
    rows = rows.reshape(-1, f + m + 1)
    return ExtendedDataset(
        rows[:, :f],
        rows[:, f : f + m].astype(np.int64),
        rows[:, -1].astype(np.int64),
        config,
        tuple(s.name for s in trace.sensors),
    )
