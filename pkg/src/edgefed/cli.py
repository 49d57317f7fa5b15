"""Command-line entry point: single runs and the three experiment sweeps.

Sweeps run every (point, trial) cell once, feeding the same generated
workload to all four policies (paired comparison); the trial seed is derived
from (base_seed, sweep, point, trial) and never from the policy. Completed
cells are checkpointed to an index file so an interrupted sweep resumes where
it left off, and the CSVs are regenerated from the index in a canonical
order, which makes re-runs byte-identical.

``EDGEFED_THREADS`` caps how many trials run concurrently.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import replace

import numpy as np

from . import metrics, simcore, workload
from .config import SimConfig, load_config, paper_default_config
from .errors import ConfigurationError
from .metrics import MetricsReport, TrialAggregate, aggregate

POLICY_ORDER = ("bp", "mect", "mc", "nr")
VEHICLE_POINTS = (2000, 3000, 4000, 5000, 6000, 7000)
URGENCY_POINTS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)

_SWEEP_IDS = {"vehicles": 0, "single-bs": 0, "urgency": 1, "single": 2}


def resolve_threads() -> int:
    raw = os.environ.get("EDGEFED_THREADS", "").strip()
    cap = os.cpu_count() or 1
    if raw:
        try:
            cap = max(1, min(cap, int(raw)))
        except ValueError:
            raise ConfigurationError(f"EDGEFED_THREADS must be an integer, got {raw!r}") from None
    return cap


def derive_seed(base_seed: int, sweep: str, point_key: int, trial: int) -> int:
    """Stable trial seed; the policy is deliberately not an input."""
    ss = np.random.SeedSequence([int(base_seed), _SWEEP_IDS[sweep], int(point_key), int(trial)])
    return int(ss.generate_state(1, np.uint64)[0])


def run_point(config: SimConfig, seed: int, policies=POLICY_ORDER, taskset=None) -> dict[str, MetricsReport]:
    """Run one workload through several policies; the workload is shared."""
    if taskset is None:
        wcfg = replace(config.workload, seed=seed)
        taskset = workload.generate(wcfg, config.task_types, sorted(config.stations, key=lambda s: s.id))
    out = {}
    for pol in policies:
        out[pol] = simcore.run(replace(config, policy=pol), seed, taskset=taskset)
    return out


def _point_key(sweep: str, point) -> int:
    return int(point) if sweep in ("vehicles", "single-bs") else round(float(point) * 1000)


def _apply_point(config: SimConfig, sweep: str, point) -> SimConfig:
    if sweep in ("vehicles", "single-bs"):
        return replace(config, workload=replace(config.workload, vehicle_count=int(point)))
    return replace(config, workload=replace(config.workload, urgent_fraction=float(point)))


def _atomic_write(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def run_sweep(
    config: SimConfig,
    sweep: str,
    out_dir,
    *,
    points=None,
    policies=POLICY_ORDER,
    trials=None,
    threads=None,
    quiet=False,
) -> dict[tuple, TrialAggregate]:
    """Run one experiment grid and write runs/stations/sweep CSVs.

    Returns {(point, policy): TrialAggregate}. Resumes from the index file in
    ``out_dir`` when a previous invocation was interrupted.
    """
    if sweep not in ("vehicles", "urgency", "single-bs"):
        raise ConfigurationError(f"unknown sweep {sweep!r}")
    config.validate()
    if points is None:
        points = VEHICLE_POINTS if sweep in ("vehicles", "single-bs") else URGENCY_POINTS
    trials = config.trials if trials is None else trials
    threads = resolve_threads() if threads is None else threads
    os.makedirs(out_dir, exist_ok=True)

    index_path = os.path.join(out_dir, f"sweep_{sweep}_index.json")
    base_digest = config.digest()
    cells: dict[str, dict] = {}
    if os.path.exists(index_path):
        with open(index_path) as fh:
            saved = json.load(fh)
        if saved.get("config_digest") == base_digest and saved.get("sweep") == sweep:
            cells = saved["cells"]
        elif not quiet:
            print(f"ignoring stale index {index_path} (config changed)", file=sys.stderr)

    lock = threading.Lock()

    def cell_id(point, trial) -> str:
        return f"{_point_key(sweep, point)}:{trial}"

    def job(point, trial):
        pcfg = _apply_point(config, sweep, point)
        seed = derive_seed(config.base_seed, sweep, _point_key(sweep, point), trial)
        reports = run_point(pcfg, seed, policies=policies)
        return point, trial, {pol: r.to_dict() for pol, r in reports.items()}

    todo = [
        (point, trial)
        for point in points
        for trial in range(trials)
        if cell_id(point, trial) not in cells
    ]
    if todo:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(job, point, trial) for point, trial in todo]
            for fut in as_completed(futures):
                point, trial, reports = fut.result()
                with lock:
                    cells[cell_id(point, trial)] = reports
                    _atomic_write(
                        index_path,
                        json.dumps(
                            {"sweep": sweep, "config_digest": base_digest, "cells": cells},
                            sort_keys=True,
                        ),
                    )

    # canonical CSV regeneration from the index
    runs_rows = []
    station_rows = []
    sweep_rows = []
    station_sweep_rows = []
    aggregates: dict[tuple, TrialAggregate] = {}
    for point in points:
        vehicles = int(point) if sweep in ("vehicles", "single-bs") else config.workload.vehicle_count
        uf = config.workload.urgent_fraction if sweep in ("vehicles", "single-bs") else float(point)
        for pol in policies:
            reports = []
            for trial in range(trials):
                data = cells[cell_id(point, trial)][pol]
                report = MetricsReport.from_dict(data)
                reports.append(report)
                runs_rows.append(metrics.runs_csv_row(report, vehicles, uf))
                station_rows.extend(metrics.stations_csv_rows(report, vehicles, uf))
            agg = aggregate(reports)
            aggregates[(point, pol)] = agg
            sweep_rows.append(metrics.sweep_csv_row(agg, sweep, vehicles, uf))
            for sid, rate in agg.per_station_mean_miss_rate.items():
                station_sweep_rows.append([sweep, vehicles, uf, pol, sid, len(agg.runs), rate])

    metrics.write_csv(os.path.join(out_dir, "runs.csv"), metrics.RUNS_COLUMNS, runs_rows)
    metrics.write_csv(os.path.join(out_dir, "stations.csv"), metrics.STATIONS_COLUMNS, station_rows)
    metrics.write_csv(os.path.join(out_dir, "sweep.csv"), metrics.SWEEP_COLUMNS, sweep_rows)
    if sweep == "single-bs":
        metrics.write_csv(
            os.path.join(out_dir, "station_sweep.csv"),
            ("sweep", "vehicles", "urgent_fraction", "policy", "station", "trials", "mean_miss_rate"),
            station_sweep_rows,
        )

    if not quiet:
        for point in points:
            summary = "  ".join(
                f"{pol}={aggregates[(point, pol)].mean_miss_rate:.4f}" for pol in policies
            )
            print(f"{sweep} point {point}: miss rate {summary}")
    return aggregates


def run_single(config: SimConfig, args) -> list[MetricsReport]:
    """Plain (non-sweep) invocation: `trials` seeded runs of one policy."""
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    base = config.base_seed if args.seed is None else args.seed
    trials = config.trials
    stations = sorted(config.stations, key=lambda s: s.id)

    taskset = None
    if args.trace:
        if os.path.exists(args.trace):
            taskset = workload.load_trace(args.trace, config.task_types, stations)
        else:
            seed0 = base if trials == 1 and args.seed is not None else derive_seed(base, "single", 0, 0)
            wcfg = replace(config.workload, seed=seed0)
            taskset = workload.generate(wcfg, config.task_types, stations)
            workload.export_trace(taskset, args.trace)

    def seed_for(trial: int) -> int:
        if args.seed is not None and trials == 1:
            return args.seed
        return derive_seed(base, "single", 0, trial)

    def dump_path(trial: int):
        if not args.dump_events:
            return None
        return args.dump_events if trials == 1 else f"{args.dump_events}.{trial}"

    reports: list[MetricsReport] = [None] * trials  # type: ignore[list-item]

    def job(trial: int):
        return trial, simcore.run(
            config,
            seed_for(trial),
            taskset=taskset,
            dump_events=dump_path(trial),
            dump_matrices=(args.dump_matrices if trial == 0 else None),
        )

    threads = resolve_threads()
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for trial, report in pool.map(job, range(trials)):
            reports[trial] = report

    uf = config.workload.urgent_fraction
    vehicles = config.workload.vehicle_count
    runs_rows = [metrics.runs_csv_row(r, vehicles, uf) for r in reports]
    station_rows = []
    for r in reports:
        station_rows.extend(metrics.stations_csv_rows(r, vehicles, uf))
    metrics.write_csv(os.path.join(out_dir, "runs.csv"), metrics.RUNS_COLUMNS, runs_rows)
    metrics.write_csv(os.path.join(out_dir, "stations.csv"), metrics.STATIONS_COLUMNS, station_rows)

    if not args.quiet:
        if reports[0].generated:
            agg = aggregate(reports)
            print(
                f"policy={config.policy} vehicles={vehicles} trials={trials} "
                f"miss_rate mean={agg.mean_miss_rate:.4f} std={agg.std_miss_rate:.4f}"
            )
        else:
            print(f"policy={config.policy} vehicles={vehicles}: no tasks generated")
    return reports


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="edgefed",
        description="Simulate federated edge stations serving deadline-constrained vehicular tasks.",
    )
    p.add_argument("--config", metavar="PATH", help="config file (defaults apply when omitted)")
    p.add_argument("--policy", choices=POLICY_ORDER, help="override the configured policy")
    p.add_argument("--vehicles", type=int, metavar="N", help="override the vehicle count")
    p.add_argument("--urgent-fraction", type=float, metavar="F", help="force the urgent task share")
    p.add_argument("--seed", type=int, metavar="N", help="base seed override")
    p.add_argument("--trials", type=int, metavar="N", help="number of seeded trials")
    p.add_argument("--sweep", choices=("vehicles", "urgency", "single-bs"), help="run an experiment sweep")
    p.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    p.add_argument("--trace", metavar="PATH", help="replay this workload trace if it exists, else export it")
    p.add_argument("--dump-events", metavar="PATH", help="write the per-run event trace")
    p.add_argument("--dump-matrices", metavar="PATH", help="write the final learned matrices as JSON")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else paper_default_config()
        if args.policy:
            config = replace(config, policy=args.policy)
        if args.vehicles is not None:
            config = replace(config, workload=replace(config.workload, vehicle_count=args.vehicles))
        if args.urgent_fraction is not None:
            config = replace(config, workload=replace(config.workload, urgent_fraction=args.urgent_fraction))
        if args.trials is not None:
            config = replace(config, trials=args.trials)
        if args.seed is not None:
            config = replace(config, base_seed=args.seed)
        config.validate()

        if args.sweep:
            run_sweep(config, args.sweep, args.out, quiet=args.quiet)
        else:
            run_single(config, args)
    except (ConfigurationError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
