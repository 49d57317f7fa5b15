"""The discrete-event engine.

One trial is a single pass of :func:`edgefed._kernels.run_sim` over flat
arrays: a simulation clock with a binary-heap event queue, per-station FCFS
batch queues feeding homogeneous cores, the fixed-delay inter-station link,
and sample feedback into the completion/transfer-time matrices. This module
owns the object-level domain types, the delay formulas, and the driver that
converts a config plus a workload into kernel arrays and the kernel outputs
into a metrics report.

Event ordering: events are processed in non-decreasing time; ties break by
kind (completions before arrivals before refreshes) and then by insertion
sequence. Execution starts are handled inline at the timestamp that frees or
finds an idle core, and appear in the event trace.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Optional

import numpy as np

from . import _kernels, workload
from .errors import ConfigurationError
from .metrics import MetricsReport, StationCounters
from .stochastic import NormalDist, ProfileMatrix


class TaskStatus(IntEnum):
    PENDING = _kernels.ST_PENDING
    TRANSFERRING = _kernels.ST_TRANSFERRING
    QUEUED = _kernels.ST_QUEUED
    EXECUTING = _kernels.ST_EXECUTING
    COMPLETED_ON_TIME = _kernels.ST_ON_TIME
    COMPLETED_LATE = _kernels.ST_LATE
    DROPPED = _kernels.ST_DROPPED


class EventKind(IntEnum):
    EXEC_COMPLETE = _kernels.EV_EXEC_COMPLETE
    TRANSFER_COMPLETE = _kernels.EV_TRANSFER_COMPLETE
    ARRIVAL = _kernels.EV_ARRIVAL
    REFRESH = _kernels.EV_REFRESH
    EXEC_START = _kernels.EV_EXEC_START


@dataclass
class Task:
    """One vehicular service request."""

    id: int
    type_id: int
    length: float  # million instructions
    data_size_up: float  # megabits
    data_size_down: float  # megabits
    urgent: bool
    origin_position: tuple[float, float]
    arrival_time: float
    deadline: float  # absolute seconds
    receiving_station: int
    executing_station: Optional[int] = None
    status: TaskStatus = TaskStatus.PENDING

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError(f"task {self.id}: length must be positive")
        if self.data_size_up <= 0 or self.data_size_down <= 0:
            raise ValueError(f"task {self.id}: data sizes must be positive")
        if not self.deadline > self.arrival_time:
            raise ValueError(f"task {self.id}: deadline must exceed arrival time")


@dataclass(frozen=True)
class NetworkModel:
    """Vehicle link bandwidth plus the fixed inter-station transfer delay.

    ``wan_bandwidth_mbps`` only seeds the transfer-time priors; the realized
    inter-station delay is the constant ``lan_transfer_delay_s`` per hop.
    """

    wlan_bandwidth_mbps: float = 200.0
    lan_transfer_delay_s: float = 2.0
    wan_bandwidth_mbps: float = 200.0

    def __post_init__(self):
        if self.wlan_bandwidth_mbps <= 0 or self.wan_bandwidth_mbps <= 0:
            raise ValueError("bandwidths must be positive")
        if self.lan_transfer_delay_s < 0:
            raise ValueError("lan_transfer_delay_s must be non-negative")


@dataclass
class BaseStationState:
    """Static capacity plus the dynamic queue/core occupancy of one station."""

    id: int
    position: tuple[float, float]
    core_count: int
    mips_per_core: float
    neighbor_ids: list[int] = field(default_factory=list)
    queue: list[int] = field(default_factory=list)  # task ids, FIFO
    vm_busy_until: list[float] = field(init=False)
    ett: Optional[ProfileMatrix] = None

    def __post_init__(self):
        if self.core_count <= 0:
            raise ValueError(f"station {self.id}: core_count must be positive")
        if self.mips_per_core <= 0:
            raise ValueError(f"station {self.id}: mips_per_core must be positive")
        self.vm_busy_until = [0.0] * self.core_count


@dataclass(frozen=True)
class SimEvent:
    """One line of the event trace."""

    time: float
    kind: EventKind
    task_id: int  # -1 for refreshes
    station_id: int  # -1 for refreshes
    status: Optional[TaskStatus]  # None for refreshes


def uplink_delay(task, net: NetworkModel) -> float:
    """Vehicle-to-station transfer time for the task's input data."""
    return task.data_size_up / net.wlan_bandwidth_mbps


def downlink_delay(task, net: NetworkModel) -> float:
    """Station-to-vehicle transfer time for the task's result data."""
    return task.data_size_down / net.wlan_bandwidth_mbps


def compute_deadline(task, e_ref: float, slack: float, net: NetworkModel) -> float:
    """Absolute deadline: arrival + reference completion time + slack + comm delay."""
    if e_ref <= 0:
        raise ValueError("e_ref must be positive")
    if slack < 0:
        raise ValueError("slack must be non-negative")
    return task.arrival_time + e_ref + slack + uplink_delay(task, net) + downlink_delay(task, net)


def service_time(task, station) -> float:
    """Seconds one core needs for the task; a task occupies one core exclusively."""
    return task.length / station.mips_per_core


@dataclass
class RunDetail:
    """Per-task and per-event internals of one trial, for tests and debugging.

    Per-task arrays are in original task order; events and sample logs are in
    processing order. ``exec_station`` is -1 for dropped tasks.
    """

    report: MetricsReport
    taskset: workload.TaskSet
    deadline: np.ndarray
    t_bs: np.ndarray
    up_delay: np.ndarray
    down_delay: np.ndarray
    status: np.ndarray
    exec_station: np.ndarray
    enqueue_time: np.ndarray
    start_time: np.ndarray
    completion_time: np.ndarray
    decision_prob: np.ndarray
    e2e_delay: np.ndarray  # NaN where the task did not complete
    events: list[SimEvent]
    etc_mu: np.ndarray  # (T, S) in dense station order
    etc_sigma: np.ndarray
    ett_mu: np.ndarray  # (S, T, S)
    ett_sigma: np.ndarray
    etc_log: tuple[np.ndarray, np.ndarray]  # (flat pair index, duration)
    ett_log: tuple[np.ndarray, np.ndarray]
    refresh_every: int
    station_ids: np.ndarray


def bootstrap_matrices(config) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Capacity-derived priors, flattened for the kernel.

    Completion prior per (type, station): mean length over the station's
    per-core rate, with sigma at 10% of the mean. Transfer prior per
    (owner, type, dest): fixed hop delay plus the type's upload size over the
    provisioning bandwidth, sigma again at 10%.
    """
    stations = sorted(config.stations, key=lambda s: s.id)
    types = config.task_types
    S = len(stations)
    T = len(types)
    net = config.network
    mean_len = np.array([t.length_mean_mi for t in types])
    mips = np.array([s.mips_per_core for s in stations], dtype=np.float64)
    etc_mu = (mean_len[:, None] / mips[None, :]).reshape(T * S)
    etc_sig = 0.1 * etc_mu
    up = np.array([t.data_up_mb for t in types])
    ett_one = net.lan_transfer_delay_s + up / net.wan_bandwidth_mbps  # per type
    ett_mu = np.tile(np.repeat(ett_one, S), S)  # (owner, type, dest) flattened
    ett_sig = 0.1 * ett_mu
    return etc_mu.copy(), etc_sig, ett_mu, ett_sig


def build_profile_matrices(config) -> tuple[ProfileMatrix, dict[int, ProfileMatrix]]:
    """Object-level bootstrap: the shared completion matrix plus one transfer
    matrix per station (keyed by (type, neighbour id))."""
    stations = sorted(config.stations, key=lambda s: s.id)
    types = config.task_types
    net = config.network
    etc_entries = {}
    for t in types:
        for s in stations:
            mu = t.length_mean_mi / s.mips_per_core
            etc_entries[(t.type_id, s.id)] = NormalDist(mu, 0.1 * mu)
    etc = ProfileMatrix("ETC", etc_entries, window=config.sample_window)
    neighbors = config.neighbors()
    etts = {}
    for s in stations:
        entries = {}
        for t in types:
            mu = net.lan_transfer_delay_s + t.data_up_mb / net.wan_bandwidth_mbps
            for j in neighbors[s.id]:
                entries[(t.type_id, j)] = NormalDist(mu, 0.1 * mu)
        etts[s.id] = ProfileMatrix("ETT", entries, window=config.sample_window)
    return etc, etts


def _empty_report(config, seed) -> MetricsReport:
    per_station = {s.id: StationCounters() for s in config.stations}
    return MetricsReport(
        per_station=per_station,
        system=StationCounters(),
        transfers=0,
        policy_name=config.policy,
        seed=seed,
        config_digest=config.digest(),
    )


def run(
    config,
    seed: int,
    *,
    taskset: Optional[workload.TaskSet] = None,
    dump_events=None,
    dump_matrices=None,
    collect_detail: bool = False,
):
    """Simulate one trial; identical (config, seed, taskset) reproduce bit-identical results.

    Returns the MetricsReport, or a RunDetail when ``collect_detail`` is set.
    ``taskset`` overrides workload generation (used for trace replay and for
    paired policy comparisons on a shared workload).
    """
    config.validate()
    policy_code = _kernels.POLICY_CODES.get(config.policy)
    if policy_code is None:
        raise ConfigurationError(f"unknown policy {config.policy!r}")

    stations = sorted(config.stations, key=lambda s: s.id)
    S = len(stations)
    types = config.task_types
    T = len(types)
    net = config.network

    if taskset is None:
        wcfg = replace(config.workload, seed=seed)
        taskset = workload.generate(wcfg, types, stations)
    n = taskset.n
    if n == 0:
        report = _empty_report(config, seed)
        if collect_detail:
            etc_mu, etc_sig, ett_mu, ett_sig = bootstrap_matrices(config)
            empty_i = np.empty(0, np.int64)
            empty_f = np.empty(0, np.float64)
            return RunDetail(
                report, taskset, empty_f, empty_f, empty_f, empty_f, empty_i, empty_i,
                empty_f, empty_f, empty_f, empty_f, empty_f, [],
                etc_mu.reshape(T, S), etc_sig.reshape(T, S),
                ett_mu.reshape(S, T, S), ett_sig.reshape(S, T, S),
                (empty_i, empty_f), (empty_i, empty_f), 0,
                np.array([s.id for s in stations], dtype=np.int64),
            )
        return report

    station_ids = np.array([s.id for s in stations], dtype=np.int64)
    id_to_dense = {int(sid): k for k, sid in enumerate(station_ids)}
    mips = np.array([s.mips_per_core for s in stations], dtype=np.float64)
    n_cores = np.array([s.cores for s in stations], dtype=np.int64)

    nbr_map = config.neighbors()
    indptr = np.zeros(S + 1, np.int64)
    flat = []
    for k, s in enumerate(stations):
        ids = sorted(nbr_map[s.id])
        flat.extend(id_to_dense[j] for j in ids)
        indptr[k + 1] = len(flat)
    nbr_ids = np.array(flat, dtype=np.int64) if flat else np.empty(0, np.int64)

    # deadlines realize arrival + reference completion + slack + uplink + downlink
    tt = taskset.type_id
    up_d = taskset.up_mb / net.wlan_bandwidth_mbps
    down_d = taskset.down_mb / net.wlan_bandwidth_mbps
    if config.deadline_ref == "task_length":
        e_ref_task = taskset.length / config.reference_mips
    else:  # "type_mean"
        e_ref_task = np.array([t.length_mean_mi for t in types])[tt] / config.reference_mips
    slack = np.array([t.slack_s for t in types])
    deadline = taskset.arrival + e_ref_task + slack[tt] + up_d + down_d
    t_bs = taskset.arrival + up_d

    try:
        recv_dense = np.array([id_to_dense[int(r)] for r in taskset.receiving], dtype=np.int64)
    except KeyError as exc:
        raise ConfigurationError(f"task routed to unknown station {exc}") from None

    order = np.argsort(t_bs, kind="stable")
    s_tbs = t_bs[order]
    s_arr = taskset.arrival[order]
    s_tt = tt[order]
    s_len = taskset.length[order]
    s_up = up_d[order]
    s_down = down_d[order]
    s_dl = deadline[order]
    s_recv = recv_dense[order]
    orig_id = order.astype(np.int64)

    etc_mu, etc_sig, ett_mu, ett_sig = bootstrap_matrices(config)

    if config.refresh_period_s is not None:
        refresh_every = 0
        refresh_period = float(config.refresh_period_s)
    else:
        refresh_every = int(math.ceil(n * config.refresh_fraction))
        refresh_period = 0.0

    status = np.zeros(n, np.int64)
    exec_st = np.full(n, -1, np.int64)
    enq_t = np.full(n, np.nan)
    start_t = np.full(n, np.nan)
    comp_t = np.full(n, np.nan)
    dec_prob = np.full(n, np.nan)

    trace_on = bool(dump_events) or collect_detail
    ev_cap = 4 * n + 256 if trace_on else 1
    ev_time = np.empty(ev_cap, np.float64)
    ev_kind = np.empty(ev_cap, np.int64)
    ev_task = np.empty(ev_cap, np.int64)
    ev_station = np.empty(ev_cap, np.int64)
    ev_status = np.empty(ev_cap, np.int64)

    transfers, n_ev, n_etc, n_ett, etc_lp, etc_lv, ett_lp, ett_lv = _kernels.run_sim(
        s_tbs, s_arr, s_tt, s_len, s_up, s_down, s_dl, s_recv, orig_id,
        station_ids, mips, n_cores, indptr, nbr_ids,
        etc_mu, etc_sig, ett_mu, ett_sig,
        policy_code, bool(config.bp_first_improvement),
        float(config.drop_threshold), float(config.tie_tolerance),
        float(net.lan_transfer_delay_s),
        refresh_every, refresh_period,
        int(config.sample_window or 0), bool(config.return_via_receiving),
        status, exec_st, enq_t, start_t, comp_t, dec_prob,
        trace_on, ev_time, ev_kind, ev_task, ev_station, ev_status,
    )

    done = (status == _kernels.ST_ON_TIME) | (status == _kernels.ST_LATE)
    dropped_mask = status == _kernels.ST_DROPPED
    if int(done.sum() + dropped_mask.sum()) != n:
        raise RuntimeError("event loop finished with unaccounted tasks")

    received = np.bincount(s_recv, minlength=S)
    dropped = np.bincount(s_recv[dropped_mask], minlength=S)
    on_time = np.bincount(exec_st[status == _kernels.ST_ON_TIME], minlength=S)
    late = np.bincount(exec_st[status == _kernels.ST_LATE], minlength=S)
    executed = on_time + late

    qwait = start_t - enq_t
    qwait_sum = np.bincount(exec_st[done], weights=qwait[done], minlength=S)
    transferred = done & (exec_st != s_recv)
    e2e = comp_t - s_arr + s_down
    if config.return_via_receiving:
        e2e = e2e + np.where(exec_st != s_recv, net.lan_transfer_delay_s, 0.0)
    e2e_sum = np.bincount(exec_st[done], weights=e2e[done], minlength=S)

    per_station = {}
    for k, sid in enumerate(station_ids):
        cnt = int(executed[k])
        per_station[int(sid)] = StationCounters(
            received=int(received[k]),
            executed=cnt,
            completed_on_time=int(on_time[k]),
            completed_late=int(late[k]),
            dropped=int(dropped[k]),
            mean_queue_wait=float(qwait_sum[k] / cnt) if cnt else 0.0,
            mean_e2e_delay=float(e2e_sum[k] / cnt) if cnt else 0.0,
        )
    total_exec = int(executed.sum())
    system = StationCounters(
        received=int(received.sum()),
        executed=total_exec,
        completed_on_time=int(on_time.sum()),
        completed_late=int(late.sum()),
        dropped=int(dropped.sum()),
        mean_queue_wait=float(qwait_sum.sum() / total_exec) if total_exec else 0.0,
        mean_e2e_delay=float(e2e_sum.sum() / total_exec) if total_exec else 0.0,
    )
    report = MetricsReport(
        per_station=per_station,
        system=system,
        transfers=int(transfers),
        policy_name=config.policy,
        seed=seed,
        config_digest=config.digest(),
    )

    events: list[SimEvent] = []
    if trace_on:
        for k in range(n_ev):
            kind = EventKind(int(ev_kind[k]))
            st_code = int(ev_status[k])
            events.append(
                SimEvent(
                    time=float(ev_time[k]),
                    kind=kind,
                    task_id=int(ev_task[k]),
                    station_id=int(ev_station[k]),
                    status=None if st_code < 0 else TaskStatus(st_code),
                )
            )
    if dump_events:
        write_event_dump(dump_events, events)
    if dump_matrices:
        _dump_matrices(dump_matrices, config, station_ids, etc_mu, etc_sig, ett_mu, ett_sig,
                       etc_lp, etc_lv, ett_lp, ett_lv)

    if not collect_detail:
        return report

    inv = np.empty(n, np.int64)
    inv[orig_id] = np.arange(n)

    def unsort(a):
        return a[inv]

    e2e_out = np.where(done, e2e, np.nan)
    exec_real = np.where(exec_st >= 0, station_ids[np.maximum(exec_st, 0)], -1)
    return RunDetail(
        report=report,
        taskset=taskset,
        deadline=deadline,
        t_bs=t_bs,
        up_delay=up_d,
        down_delay=down_d,
        status=unsort(status),
        exec_station=unsort(exec_real),
        enqueue_time=unsort(enq_t),
        start_time=unsort(start_t),
        completion_time=unsort(comp_t),
        decision_prob=unsort(dec_prob),
        e2e_delay=unsort(e2e_out),
        events=events,
        etc_mu=etc_mu.reshape(T, S),
        etc_sigma=etc_sig.reshape(T, S),
        ett_mu=ett_mu.reshape(S, T, S),
        ett_sigma=ett_sig.reshape(S, T, S),
        etc_log=(etc_lp.copy(), etc_lv.copy()),
        ett_log=(ett_lp.copy(), ett_lv.copy()),
        refresh_every=refresh_every,
        station_ids=station_ids,
    )


_KIND_NAMES = {
    EventKind.EXEC_COMPLETE: "exec_complete",
    EventKind.TRANSFER_COMPLETE: "transfer_complete",
    EventKind.ARRIVAL: "arrival",
    EventKind.REFRESH: "refresh",
    EventKind.EXEC_START: "exec_start",
}
_NAME_KINDS = {v: k for k, v in _KIND_NAMES.items()}

_STATUS_NAMES = {
    TaskStatus.PENDING: "pending",
    TaskStatus.TRANSFERRING: "transferring",
    TaskStatus.QUEUED: "queued",
    TaskStatus.EXECUTING: "executing",
    TaskStatus.COMPLETED_ON_TIME: "completed_on_time",
    TaskStatus.COMPLETED_LATE: "completed_late",
    TaskStatus.DROPPED: "dropped",
}
_NAME_STATUS = {v: k for k, v in _STATUS_NAMES.items()}


def write_event_dump(path, events: list[SimEvent]) -> None:
    """One tab-separated line per event: time, kind, task_id, station_id, status."""
    with open(path, "w") as fh:
        for ev in events:
            status = "-" if ev.status is None else _STATUS_NAMES[ev.status]
            fh.write(f"{ev.time!r}\t{_KIND_NAMES[ev.kind]}\t{ev.task_id}\t{ev.station_id}\t{status}\n")


def parse_event_dump(path) -> list[SimEvent]:
    events = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            t, kind, task, station, status = line.split("\t")
            events.append(
                SimEvent(
                    time=float(t),
                    kind=_NAME_KINDS[kind],
                    task_id=int(task),
                    station_id=int(station),
                    status=None if status == "-" else _NAME_STATUS[status],
                )
            )
    return events


def _dump_matrices(path, config, station_ids, etc_mu, etc_sig, ett_mu, ett_sig,
                   etc_lp, etc_lv, ett_lp, ett_lv) -> None:
    S = len(station_ids)
    T = len(config.task_types)
    etc_counts = np.bincount(etc_lp, minlength=T * S) if etc_lp.size else np.zeros(T * S, np.int64)
    ett_counts = np.bincount(ett_lp, minlength=S * T * S) if ett_lp.size else np.zeros(S * T * S, np.int64)
    data = {
        "etc": [
            {
                "task_type": t,
                "station": int(station_ids[s]),
                "mu": float(etc_mu[t * S + s]),
                "sigma": float(etc_sig[t * S + s]),
                "samples": int(etc_counts[t * S + s]),
            }
            for t in range(T)
            for s in range(S)
        ],
        "ett": [
            {
                "owner": int(station_ids[o]),
                "task_type": t,
                "dest": int(station_ids[d]),
                "mu": float(ett_mu[(o * T + t) * S + d]),
                "sigma": float(ett_sig[(o * T + t) * S + d]),
                "samples": int(ett_counts[(o * T + t) * S + d]),
            }
            for o in range(S)
            for t in range(T)
            for d in range(S)
            if o != d
        ],
    }
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
