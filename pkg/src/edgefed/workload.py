"""Synthetic vehicular workload generation.

Arrivals form a Poisson process whose rate scales with the vehicle count;
each request gets a task type, a uniform-random position in the service
area, a uniform length from its type's range, and the nearest station as its
receiving station. Generation is a pure function of (config, seed) so the
same trace can be replayed across policies for paired comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError

# Calibration constants for the default catalog. The paper-style topology is
# oversubscribed around 4,000 vehicles with these values; see README for the
# calibration procedure.
DEFAULT_RATE_PER_VEHICLE_HOUR = 1.5
DEFAULT_URGENT_SLACK_S = 4.0
DEFAULT_NON_URGENT_SLACK_S = 10.0


@dataclass(frozen=True)
class TaskTypeSpec:
    """Static description of one service type."""

    type_id: int
    name: str
    urgent: bool
    length_min_mi: float
    length_max_mi: float
    data_up_mb: float
    data_down_mb: float
    slack_s: float
    rate_per_vehicle_hour: float

    def __post_init__(self):
        if not 0 < self.length_min_mi <= self.length_max_mi:
            raise ValueError(f"type {self.name!r}: length range must satisfy 0 < min <= max")
        if self.data_up_mb <= 0 or self.data_down_mb <= 0:
            raise ValueError(f"type {self.name!r}: data sizes must be positive")
        if self.slack_s < 0 or self.rate_per_vehicle_hour < 0:
            raise ValueError(f"type {self.name!r}: slack and rate must be non-negative")

    @property
    def length_mean_mi(self) -> float:
        return 0.5 * (self.length_min_mi + self.length_max_mi)


def default_task_catalog() -> list[TaskTypeSpec]:
    """Two urgent and two non-urgent service types with calibrated defaults."""
    return [
        TaskTypeSpec(0, "hazard_alert", True, 2000.0, 3000.0, 0.8, 0.2,
                     DEFAULT_URGENT_SLACK_S, DEFAULT_RATE_PER_VEHICLE_HOUR),
        TaskTypeSpec(1, "lane_change_warning", True, 2000.0, 3000.0, 0.8, 0.2,
                     DEFAULT_URGENT_SLACK_S, DEFAULT_RATE_PER_VEHICLE_HOUR),
        TaskTypeSpec(2, "on_board_entertainment", False, 10000.0, 15000.0, 8.0, 24.0,
                     DEFAULT_NON_URGENT_SLACK_S, DEFAULT_RATE_PER_VEHICLE_HOUR),
        TaskTypeSpec(3, "fuel_usage_statistics", False, 10000.0, 15000.0, 8.0, 24.0,
                     DEFAULT_NON_URGENT_SLACK_S, DEFAULT_RATE_PER_VEHICLE_HOUR),
    ]


@dataclass
class WorkloadConfig:
    """Knobs for one workload: how many vehicles, for how long, what mix."""

    vehicle_count: int = 2000
    duration_s: float = 3600.0
    urgent_fraction: float | None = None  # None = catalog mix
    area: tuple[float, float] = (5000.0, 3000.0)
    seed: int | None = None
    # When the urgent fraction is forced, "preserve_demand" rescales the
    # arrival rate so the offered compute load (MI/s) stays at the catalog
    # level; "preserve_rate" keeps the task count and lets the load swing
    # with the mix (urgent tasks are ~5x shorter).
    urgency_mode: str = "preserve_demand"

    def __post_init__(self):
        if self.vehicle_count < 0:
            raise ValueError("vehicle_count must be non-negative")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.urgent_fraction is not None and not 0.0 <= self.urgent_fraction <= 1.0:
            raise ValueError("urgent_fraction must lie in [0, 1]")
        if self.urgency_mode not in ("preserve_demand", "preserve_rate"):
            raise ValueError(f"unknown urgency_mode {self.urgency_mode!r}")


@dataclass
class TaskSet:
    """Column-oriented batch of generated requests, sorted by arrival time."""

    arrival: np.ndarray  # seconds, ascending
    type_id: np.ndarray  # int64 indices into the catalog
    length: np.ndarray  # million instructions
    x: np.ndarray
    y: np.ndarray
    up_mb: np.ndarray
    down_mb: np.ndarray
    urgent: np.ndarray  # bool
    receiving: np.ndarray  # real station ids

    @property
    def n(self) -> int:
        return int(self.arrival.shape[0])


def _empty_taskset() -> TaskSet:
    f = lambda: np.empty(0, np.float64)  # noqa: E731
    i = lambda: np.empty(0, np.int64)  # noqa: E731
    return TaskSet(f(), i(), f(), f(), f(), f(), f(), np.empty(0, bool), i())


def nearest_station(position: tuple[float, float], stations: Sequence) -> int:
    """Station id with minimum Euclidean distance; ties go to the lower id."""
    if not stations:
        raise ConfigurationError("station list is empty")
    px, py = position
    best_id = None
    best_d = math.inf
    for st in sorted(stations, key=lambda s: s.id):
        d = (st.x - px) ** 2 + (st.y - py) ** 2
        if d < best_d:
            best_d = d
            best_id = st.id
    return best_id


def _nearest_ids(xs: np.ndarray, ys: np.ndarray, stations: Sequence) -> np.ndarray:
    order = sorted(stations, key=lambda s: s.id)
    sx = np.array([s.x for s in order])
    sy = np.array([s.y for s in order])
    ids = np.array([s.id for s in order], dtype=np.int64)
    d2 = (xs[:, None] - sx[None, :]) ** 2 + (ys[:, None] - sy[None, :]) ** 2
    return ids[np.argmin(d2, axis=1)]  # argmin keeps the first (lowest id) on ties


def _class_mean_length(types: Sequence[TaskTypeSpec], urgent: bool) -> tuple[float, float]:
    """(rate-weighted mean length, total rate) over one urgency class."""
    rate = sum(t.rate_per_vehicle_hour for t in types if t.urgent == urgent)
    if rate == 0:
        return 0.0, 0.0
    mean = sum(t.rate_per_vehicle_hour * t.length_mean_mi for t in types if t.urgent == urgent) / rate
    return mean, rate


def generate(cfg: WorkloadConfig, types: Sequence[TaskTypeSpec], stations: Sequence) -> TaskSet:
    """Draw one workload. Fully determined by ``cfg.seed``."""
    if not stations:
        raise ConfigurationError("cannot generate a workload without stations")
    if not types:
        raise ConfigurationError("cannot generate a workload without task types")

    rates = np.array([t.rate_per_vehicle_hour for t in types], dtype=np.float64)
    lam = cfg.vehicle_count * rates.sum() / 3600.0  # aggregate arrivals per second

    uf = cfg.urgent_fraction
    if uf is not None:
        u_mean, u_rate = _class_mean_length(types, True)
        n_mean, n_rate = _class_mean_length(types, False)
        if uf > 0 and u_rate == 0:
            raise ConfigurationError("urgent_fraction > 0 but the catalog has no urgent types")
        if uf < 1 and n_rate == 0:
            raise ConfigurationError("urgent_fraction < 1 but the catalog has no non-urgent types")
        if cfg.urgency_mode == "preserve_demand" and rates.sum() > 0:
            catalog_mean = float(rates @ np.array([t.length_mean_mi for t in types])) / rates.sum()
            mix_mean = uf * u_mean + (1.0 - uf) * n_mean
            lam *= catalog_mean / mix_mean

    if lam <= 0:
        return _empty_taskset()

    rng = np.random.default_rng(cfg.seed)

    # arrival instants: i.i.d. exponential gaps, drawn in deterministic chunks
    expected = lam * cfg.duration_s
    chunk = max(64, int(expected + 6.0 * math.sqrt(expected) + 16))
    pieces = []
    t_end = 0.0
    while True:
        gaps = rng.exponential(1.0 / lam, chunk)
        cs = np.cumsum(gaps) + t_end
        pieces.append(cs)
        t_end = float(cs[-1])
        if t_end > cfg.duration_s:
            break
    arrival = np.concatenate(pieces)
    n = int(np.searchsorted(arrival, cfg.duration_s, side="right"))
    arrival = arrival[:n].copy()
    if n == 0:
        return _empty_taskset()

    # task types: catalog mix by rate, or a forced urgent share
    urgent_flags = np.array([t.urgent for t in types], dtype=bool)
    if uf is None:
        cum = np.cumsum(rates / rates.sum())
        type_idx = np.minimum(np.searchsorted(cum, rng.random(n), side="right"), len(types) - 1)
    else:
        pick_urgent = rng.random(n) < uf
        u = rng.random(n)
        type_idx = np.empty(n, dtype=np.int64)
        for flag, mask in ((True, pick_urgent), (False, ~pick_urgent)):
            members = np.flatnonzero(urgent_flags == flag)
            cnt = int(mask.sum())
            if cnt == 0:
                continue
            w = rates[members]
            cum = np.cumsum(w / w.sum())
            sel = np.minimum(np.searchsorted(cum, u[mask], side="right"), len(members) - 1)
            type_idx[mask] = members[sel]

    lmin = np.array([t.length_min_mi for t in types])
    lmax = np.array([t.length_max_mi for t in types])
    length = lmin[type_idx] + rng.random(n) * (lmax - lmin)[type_idx]

    w, h = cfg.area
    x = rng.random(n) * w
    y = rng.random(n) * h

    up = np.array([t.data_up_mb for t in types])[type_idx]
    down = np.array([t.data_down_mb for t in types])[type_idx]

    return TaskSet(
        arrival=arrival,
        type_id=type_idx.astype(np.int64),
        length=length,
        x=x,
        y=y,
        up_mb=up,
        down_mb=down,
        urgent=urgent_flags[type_idx],
        receiving=_nearest_ids(x, y, stations),
    )


TRACE_HEADER = "# edgefed workload trace v1: arrival_s\ttype_id\tlength_mi\tx_m\ty_m\tup_mb\tdown_mb"


def export_trace(ts: TaskSet, path) -> None:
    """Write one task per line; byte-stable for a given TaskSet."""
    with open(path, "w") as fh:
        fh.write(TRACE_HEADER + "\n")
        for i in range(ts.n):
            fh.write(
                f"{ts.arrival[i]!r}\t{int(ts.type_id[i])}\t{ts.length[i]!r}\t"
                f"{ts.x[i]!r}\t{ts.y[i]!r}\t{ts.up_mb[i]!r}\t{ts.down_mb[i]!r}\n"
            )


def load_trace(path, types: Sequence[TaskTypeSpec], stations: Sequence) -> TaskSet:
    """Rebuild a TaskSet from a trace file against the current topology."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 7:
                raise ConfigurationError(f"malformed trace line: {line!r}")
            rows.append(parts)
    if not rows:
        return _empty_taskset()
    arrival = np.array([float(r[0]) for r in rows])
    type_idx = np.array([int(r[1]) for r in rows], dtype=np.int64)
    if type_idx.min() < 0 or type_idx.max() >= len(types):
        raise ConfigurationError("trace references a task type missing from the catalog")
    if np.any(np.diff(arrival) < 0):
        raise ConfigurationError("trace arrivals must be sorted ascending")
    urgent_flags = np.array([t.urgent for t in types], dtype=bool)
    x = np.array([float(r[3]) for r in rows])
    y = np.array([float(r[4]) for r in rows])
    return TaskSet(
        arrival=arrival,
        type_id=type_idx,
        length=np.array([float(r[2]) for r in rows]),
        x=x,
        y=y,
        up_mb=np.array([float(r[5]) for r in rows]),
        down_mb=np.array([float(r[6]) for r in rows]),
        urgent=urgent_flags[type_idx],
        receiving=_nearest_ids(x, y, stations),
    )
