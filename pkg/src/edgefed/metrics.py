"""Per-run counters, miss-rate computations, trial aggregation, and CSV output.

Dropped tasks never execute, so they are charged to the station that decided
to drop them (the receiving station); late completions are charged to the
station that executed them. The miss rate reads over every generated task.

CSV files are byte-stable for a given set of reports: fixed column order,
floats rendered with ``repr``.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass, field

from .errors import UndefinedMetricError


@dataclass
class StationCounters:
    received: int = 0
    executed: int = 0
    completed_on_time: int = 0
    completed_late: int = 0
    dropped: int = 0
    mean_queue_wait: float = 0.0
    mean_e2e_delay: float = 0.0


@dataclass
class MetricsReport:
    """Outcome counters for one trial."""

    per_station: dict[int, StationCounters]
    system: StationCounters
    transfers: int
    policy_name: str
    seed: int
    config_digest: str

    @property
    def generated(self) -> int:
        return self.system.received

    def to_dict(self) -> dict:
        return {
            "per_station": {str(sid): asdict(c) for sid, c in sorted(self.per_station.items())},
            "system": asdict(self.system),
            "transfers": self.transfers,
            "policy_name": self.policy_name,
            "seed": self.seed,
            "config_digest": self.config_digest,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        return cls(
            per_station={int(sid): StationCounters(**c) for sid, c in data["per_station"].items()},
            system=StationCounters(**data["system"]),
            transfers=data["transfers"],
            policy_name=data["policy_name"],
            seed=data["seed"],
            config_digest=data["config_digest"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls.from_dict(json.loads(text))


def miss_rate(report: MetricsReport) -> float:
    """(late + dropped) / generated over the whole run."""
    if report.generated == 0:
        raise UndefinedMetricError("miss rate undefined: no tasks were generated")
    return (report.system.completed_late + report.system.dropped) / report.generated


def per_station_miss_rate(report: MetricsReport, station: int) -> float:
    """Station's (late + attributed drops) / (executed + attributed drops)."""
    c = report.per_station[station]
    denom = c.executed + c.dropped
    if denom == 0:
        raise UndefinedMetricError(f"station {station} miss rate undefined: no attributed tasks")
    return (c.completed_late + c.dropped) / denom


def _per_bs_means(report: MetricsReport) -> tuple[float, float]:
    """(mean over stations with attributed tasks, mean over stations with misses).

    A run where no station misses contributes 0.0 to the missing-only mean.
    """
    rates_all = []
    rates_missing = []
    for sid, c in report.per_station.items():
        if c.executed + c.dropped == 0:
            continue
        r = per_station_miss_rate(report, sid)
        rates_all.append(r)
        if c.completed_late + c.dropped > 0:
            rates_missing.append(r)
    mean_all = sum(rates_all) / len(rates_all) if rates_all else 0.0
    mean_missing = sum(rates_missing) / len(rates_missing) if rates_missing else 0.0
    return mean_all, mean_missing


@dataclass
class TrialAggregate:
    """Mean and dispersion of miss rates over repeated seeded trials."""

    runs: list[MetricsReport]
    mean_miss_rate: float = field(init=False)
    std_miss_rate: float = field(init=False)
    per_station_mean_miss_rate: dict[int, float] = field(init=False)
    per_bs_mean_all: float = field(init=False)
    per_bs_mean_missing_only: float = field(init=False)

    def __post_init__(self):
        rates = [miss_rate(r) for r in self.runs]
        self.mean_miss_rate = statistics.fmean(rates)
        self.std_miss_rate = statistics.stdev(rates) if len(rates) > 1 else 0.0
        per_station: dict[int, list[float]] = {}
        for r in self.runs:
            for sid, c in r.per_station.items():
                if c.executed + c.dropped > 0:
                    per_station.setdefault(sid, []).append(per_station_miss_rate(r, sid))
        self.per_station_mean_miss_rate = {
            sid: statistics.fmean(vals) for sid, vals in sorted(per_station.items())
        }
        pairs = [_per_bs_means(r) for r in self.runs]
        self.per_bs_mean_all = statistics.fmean(p[0] for p in pairs)
        self.per_bs_mean_missing_only = statistics.fmean(p[1] for p in pairs)


def aggregate(reports: list[MetricsReport]) -> TrialAggregate:
    """Combine trials of one (config, policy) cell; rejects mixed configs."""
    if not reports:
        raise ValueError("cannot aggregate zero reports")
    digest = reports[0].config_digest
    policy = reports[0].policy_name
    for r in reports[1:]:
        if r.config_digest != digest:
            raise ValueError("cannot aggregate reports with mixed config digests")
        if r.policy_name != policy:
            raise ValueError("cannot aggregate reports with mixed policies")
    return TrialAggregate(runs=list(reports))


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return "catalog"
    return str(value)


RUNS_COLUMNS = ("policy", "seed", "vehicles", "urgent_fraction", "miss_rate", "drops", "transfers")
STATIONS_COLUMNS = (
    "policy", "seed", "vehicles", "urgent_fraction", "station",
    "received", "executed", "completed_on_time", "completed_late", "dropped",
    "miss_rate", "mean_queue_wait", "mean_e2e_delay",
)
SWEEP_COLUMNS = (
    "sweep", "vehicles", "urgent_fraction", "policy", "trials",
    "mean_miss_rate", "std_miss_rate", "per_bs_mean_all", "per_bs_mean_missing_only",
)


def runs_csv_row(report: MetricsReport, vehicles: int, urgent_fraction) -> list:
    try:
        rate = miss_rate(report)
    except UndefinedMetricError:
        rate = ""  # zero-vehicle run
    return [
        report.policy_name, report.seed, vehicles, urgent_fraction,
        rate, report.system.dropped, report.transfers,
    ]


def stations_csv_rows(report: MetricsReport, vehicles: int, urgent_fraction) -> list[list]:
    rows = []
    for sid, c in sorted(report.per_station.items()):
        try:
            rate = per_station_miss_rate(report, sid)
        except UndefinedMetricError:
            rate = ""
        rows.append([
            report.policy_name, report.seed, vehicles, urgent_fraction, sid,
            c.received, c.executed, c.completed_on_time, c.completed_late, c.dropped,
            rate, c.mean_queue_wait, c.mean_e2e_delay,
        ])
    return rows


def sweep_csv_row(agg: TrialAggregate, sweep: str, vehicles: int, urgent_fraction) -> list:
    return [
        sweep, vehicles, urgent_fraction, agg.runs[0].policy_name, len(agg.runs),
        agg.mean_miss_rate, agg.std_miss_rate, agg.per_bs_mean_all, agg.per_bs_mean_missing_only,
    ]


def write_csv(path, columns, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
