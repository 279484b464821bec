"""Sensor layouts, traces, CSV ingestion, standardization and synthetic traces.

A trace is stored column-wise: ``timestamps`` is an integer vector of base
interval indices and ``values`` is an ``(n_records, n_features)`` float
matrix whose columns follow the sensor-then-feature order of the layout.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

STD_FLOOR = 1e-6


class TraceError(ValueError):
    """Raised for malformed trace files or layouts."""


@dataclass(frozen=True)
class SensorSpec:
    name: str
    feature_names: tuple[str, ...]
    cost: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if not self.feature_names:
            raise TraceError(f"sensor {self.name!r} has no features")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise TraceError(f"sensor {self.name!r} has duplicate feature names")
        if not self.cost >= 0:
            raise TraceError(f"sensor {self.name!r} has negative cost {self.cost}")

    @property
    def columns(self) -> list[str]:
        return [f"{self.name}.{f}" for f in self.feature_names]


@dataclass(frozen=True)
class TraceRecord:
    timestamp: int
    values: np.ndarray


def layout_columns(sensors: Sequence[SensorSpec]) -> list[str]:
    return [c for s in sensors for c in s.columns]


def sensor_slices(sensors: Sequence[SensorSpec]) -> list[slice]:
    """Column slice of each sensor inside a flat record vector."""
    out, start = [], 0
    for s in sensors:
        out.append(slice(start, start + len(s.feature_names)))
        start += len(s.feature_names)
    return out


def sensor_costs(sensors: Sequence[SensorSpec]) -> np.ndarray:
    return np.array([s.cost for s in sensors], dtype=float)


@dataclass(frozen=True)
class Trace:
    """Time-ordered multi-sensor records with unit timestamp spacing."""

    sensors: tuple[SensorSpec, ...]
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        ts = np.asarray(self.timestamps, dtype=np.int64)
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] != ts.shape[0]:
            raise TraceError("values must be (n_records, n_features) matching timestamps")
        if vals.shape[1] != self.n_features:
            raise TraceError(
                f"record width {vals.shape[1]} does not match layout width {self.n_features}"
            )
        if ts.size > 1 and np.any(np.diff(ts) != 1):
            raise TraceError("timestamps must increase with unit spacing")
        ts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    @property
    def n_features(self) -> int:
        return sum(len(s.feature_names) for s in self.sensors)

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    @property
    def costs(self) -> np.ndarray:
        return sensor_costs(self.sensors)

    @property
    def slices(self) -> list[slice]:
        return sensor_slices(self.sensors)

    @property
    def records(self) -> list[TraceRecord]:
        return list(self)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __iter__(self) -> Iterator[TraceRecord]:
        for t, v in zip(self.timestamps, self.values):
            yield TraceRecord(int(t), v)

    def slice(self, start: int, stop: int | None = None) -> "Trace":
        return Trace(self.sensors, self.timestamps[start:stop], self.values[start:stop])

    def split(self, fraction: float) -> tuple["Trace", "Trace"]:
        """Chronological split; the first part holds ``fraction`` of the records."""
        if not 0 < fraction < 1:
            raise ValueError("split fraction must lie in (0, 1)")
        cut = int(round(len(self) * fraction))
        return self.slice(0, cut), self.slice(cut)

    def with_values(self, values: np.ndarray) -> "Trace":
        return Trace(self.sensors, self.timestamps, values)


# --- layout config -----------------------------------------------------------


def layout_from_dict(data: dict) -> list[SensorSpec]:
    try:
        return [
            SensorSpec(s["name"], tuple(s["features"]), float(s.get("cost", 0.0)))
            for s in data["sensors"]
        ]
    except KeyError as exc:
        raise TraceError(f"layout config missing key {exc}") from None


def layout_to_dict(sensors: Sequence[SensorSpec]) -> dict:
    return {
        "sensors": [
            {"name": s.name, "features": list(s.feature_names), "cost": s.cost}
            for s in sensors
        ]
    }


def load_layout(path: str | Path) -> list[SensorSpec]:
    with open(path, encoding="utf-8") as fh:
        return layout_from_dict(json.load(fh))


# --- CSV I/O -----------------------------------------------------------------


def load_trace(path: str | Path, layout: Sequence[SensorSpec]) -> Trace:
    """Read a trace CSV whose header is ``timestamp`` plus layout columns.

    Rows may appear in any order; they are sorted by timestamp. Row numbers in
    error messages count data rows from 1 (the header is not counted).
    """
    expected = ["timestamp"] + layout_columns(layout)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TraceError(f"{path}: empty file") from None
        missing = [c for c in expected if c not in header]
        if missing:
            raise TraceError(f"{path}: missing column(s) {', '.join(missing)}")
        if header != expected:
            raise TraceError(f"{path}: columns out of layout order; expected {expected}")

        stamps, rows, row_numbers = [], [], []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(expected):
                raise TraceError(
                    f"{path}: row {row_no} has {len(row)} cells, expected {len(expected)}"
                )
            try:
                ts_float = float(row[0])
            except ValueError:
                raise TraceError(f"{path}: row {row_no}: non-numeric timestamp {row[0]!r}") from None
            if not ts_float.is_integer():
                raise TraceError(f"{path}: row {row_no}: timestamp {row[0]!r} is not an integer")
            vals = []
            for col, cell in zip(expected[1:], row[1:]):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise TraceError(
                        f"{path}: row {row_no}, column {col}: non-numeric value {cell!r}"
                    ) from None
            stamps.append(int(ts_float))
            rows.append(vals)
            row_numbers.append(row_no)

    if not rows:
        raise TraceError(f"{path}: no records")
    order = sorted(range(len(stamps)), key=lambda i: stamps[i])
    for prev, cur in zip(order, order[1:]):
        step = stamps[cur] - stamps[prev]
        if step == 0:
            raise TraceError(
                f"{path}: row {row_numbers[cur]}: duplicate timestamp {stamps[cur]}"
                f" (also row {row_numbers[prev]})"
            )
        if step != 1:
            raise TraceError(
                f"{path}: row {row_numbers[cur]}: timestamp gap {stamps[prev]} -> {stamps[cur]}"
            )
    return Trace(
        tuple(layout),
        np.array([stamps[i] for i in order], dtype=np.int64),
        np.array([rows[i] for i in order], dtype=float).reshape(len(rows), -1),
    )


def write_trace(trace: Trace, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp"] + layout_columns(trace.sensors))
        for t, row in zip(trace.timestamps, trace.values):
            writer.writerow([int(t)] + [repr(float(v)) for v in row])


# --- standardization ---------------------------------------------------------


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.mean) / self.std

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "StandardizationStats":
        return cls(np.asarray(data["mean"], dtype=float), np.asarray(data["std"], dtype=float))


def fit_standardization(trace: Trace | np.ndarray) -> StandardizationStats:
    values = trace.values if isinstance(trace, Trace) else np.asarray(trace, dtype=float)
    if values.shape[0] == 0:
        raise TraceError("cannot standardize an empty trace")
    mean = values.mean(axis=0)
    std = np.maximum(values.std(axis=0), STD_FLOOR)
    return StandardizationStats(mean, std)


def apply_standardization(trace: Trace, stats: StandardizationStats) -> Trace:
    return trace.with_values(stats.transform(trace.values))


def unstandardize(trace: Trace, stats: StandardizationStats) -> Trace:
    return trace.with_values(stats.inverse(trace.values))


# --- synthetic traces --------------------------------------------------------


def default_layout() -> list[SensorSpec]:
    """Six phone sensors with illustrative (not measured) per-sample costs."""
    return [
        SensorSpec("gps", ("lat", "lon", "alt"), 10.0),
        SensorSpec("cell", ("signal", "cid"), 4.0),
        SensorSpec("accelerometer", ("x", "y", "z"), 2.0),
        SensorSpec("gyroscope", ("x", "y", "z"), 2.0),
        SensorSpec("magnetic", ("x", "y", "z"), 2.0),
        SensorSpec("status", ("volume", "screen", "battery"), 0.0),
    ]


def generate_synthetic_trace(
    n_records: int,
    layout: Sequence[SensorSpec],
    n_regimes: int = 3,
    switch_prob: float = 0.02,
    noise_std: float = 0.3,
    seed: int = 0,
    return_regimes: bool = False,
) -> Trace | tuple[Trace, np.ndarray]:
    """Regime-switching Gaussian trace.

    A hidden regime follows a Markov chain that stays put with probability
    ``1 - switch_prob`` and otherwise jumps to a uniformly chosen regime
    (possibly the same one). Each regime has per-feature means drawn once
    from N(0, 1); each record is its regime mean plus N(0, noise_std**2) noise.
    """
    if n_records < 1 or n_regimes < 1:
        raise ValueError("n_records and n_regimes must be >= 1")
    if not 0.0 <= switch_prob <= 1.0:
        raise ValueError("switch_prob must lie in [0, 1]")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    layout = tuple(layout)
    n_features = sum(len(s.feature_names) for s in layout)
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, 1.0, size=(n_regimes, n_features))

    jumps = rng.random(n_records) < switch_prob
    targets = rng.integers(0, n_regimes, size=n_records)
    regimes = np.empty(n_records, dtype=np.int64)
    regimes[0] = rng.integers(0, n_regimes)
    for t in range(1, n_records):
        regimes[t] = targets[t] if jumps[t] else regimes[t - 1]

    noise = rng.normal(0.0, 1.0, size=(n_records, n_features)) * noise_std
    trace = Trace(layout, np.arange(n_records, dtype=np.int64), means[regimes] + noise)
    if return_regimes:
        return trace, regimes
    return trace


def regime_means(trace: Trace, regimes: np.ndarray) -> dict[int, np.ndarray]:
    """Per-regime average of the trace's records."""
    return {int(r): trace.values[regimes == r].mean(axis=0) for r in np.unique(regimes)}


__all__ = [
    "STD_FLOOR",
    "SensorSpec",
    "StandardizationStats",
    "Trace",
    "TraceError",
    "TraceRecord",
    "apply_standardization",
    "default_layout",
    "fit_standardization",
    "generate_synthetic_trace",
    "layout_columns",
    "layout_from_dict",
    "layout_to_dict",
    "load_layout",
    "load_trace",
    "regime_means",
    "sensor_costs",
    "sensor_slices",
    "unstandardize",
    "write_trace",
]
