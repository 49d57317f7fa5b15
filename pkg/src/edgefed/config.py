"""Configuration: defaults, file loading, validation, and digests.

The config file is a flat, line-oriented ``key = value`` format with section
headers (INI). An empty file yields the default setup: 15 stations on a 5x3
grid with 1,000 m spacing (eight 4-core and seven 2-core, all 1600 MIPS per
core), the four-type task catalog, and a 200 Mb/s vehicle link with a 2 s
inter-station hop. See README for the full grammar.

``digest()`` hashes the canonical dump with the policy line removed, so runs
of different policies over the same setup share a digest and can be compared
as paired trials.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, field, replace

from .errors import ConfigurationError
from .simcore import NetworkModel
from .workload import TaskTypeSpec, WorkloadConfig, default_task_catalog

GRID_COLS = 5
GRID_ROWS = 3
GRID_SPACING_M = 1000.0


@dataclass(frozen=True)
class StationSpec:
    """Static description of one station."""

    id: int
    x: float
    y: float
    cores: int
    mips_per_core: float


def default_stations() -> list[StationSpec]:
    """15 stations on the 5x3 grid; even ids get 4 cores, odd ids 2."""
    out = []
    for i in range(GRID_COLS * GRID_ROWS):
        col, row = i % GRID_COLS, i // GRID_COLS
        out.append(
            StationSpec(
                id=i,
                x=GRID_SPACING_M * (col + 0.5),
                y=GRID_SPACING_M * (row + 0.5),
                cores=4 if i % 2 == 0 else 2,
                mips_per_core=1600.0,
            )
        )
    return out


@dataclass
class SimConfig:
    stations: list[StationSpec] = field(default_factory=default_stations)
    network: NetworkModel = field(default_factory=NetworkModel)
    task_types: list[TaskTypeSpec] = field(default_factory=default_task_catalog)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    policy: str = "bp"
    refresh_fraction: float = 0.10
    refresh_period_s: float | None = None  # wall-clock alternative to the count cadence
    drop_threshold: float = 1e-9
    tie_tolerance: float = 1e-9
    bp_first_improvement: bool = False
    trials: int = 20
    base_seed: int = 20260811
    neighbor_radius_m: float = 1100.0
    sample_window: int | None = None
    reference_mips: float = 1600.0
    return_via_receiving: bool = False
    # reference completion time entering the deadline: the expected time of
    # this task ("task_length") or of an average task of its type ("type_mean")
    deadline_ref: str = "task_length"

    def validate(self) -> None:
        if not self.stations:
            raise ConfigurationError("[stations]: at least one station is required")
        seen = set()
        for s in self.stations:
            key = f"[stations] station_{s.id}"
            if s.id in seen:
                raise ConfigurationError(f"{key}: duplicate station id")
            seen.add(s.id)
            if s.cores <= 0:
                raise ConfigurationError(f"{key}: cores must be a positive integer")
            if s.mips_per_core <= 0:
                raise ConfigurationError(f"{key}: mips must be positive")
            if not (math.isfinite(s.x) and math.isfinite(s.y)):
                raise ConfigurationError(f"{key}: position must be finite")
        if not self.task_types:
            raise ConfigurationError("[type:*]: at least one task type is required")
        ids = [t.type_id for t in self.task_types]
        if ids != list(range(len(ids))):
            raise ConfigurationError("[type:*]: type ids must be dense 0..T-1 in catalog order")
        if self.policy not in ("bp", "mect", "mc", "nr"):
            raise ConfigurationError(f"[simulation] policy: unknown policy {self.policy!r}")
        if not 0.0 < self.refresh_fraction <= 1.0:
            raise ConfigurationError("[simulation] refresh_fraction: must lie in (0, 1]")
        if self.refresh_period_s is not None and self.refresh_period_s <= 0:
            raise ConfigurationError("[simulation] refresh_period_s: must be positive")
        if self.drop_threshold < 0 or self.tie_tolerance < 0:
            raise ConfigurationError("[simulation] drop_threshold/tie_tolerance: must be non-negative")
        if self.trials <= 0:
            raise ConfigurationError("[simulation] trials: must be positive")
        if self.neighbor_radius_m < 0:
            raise ConfigurationError("[stations] neighbor_radius_m: must be non-negative")
        if self.sample_window is not None and self.sample_window < 2:
            raise ConfigurationError("[simulation] sample_window: needs at least 2 samples")
        if self.reference_mips <= 0:
            raise ConfigurationError("[simulation] reference_mips: must be positive")

    def neighbors(self) -> dict[int, list[int]]:
        """Federation graph: stations within ``neighbor_radius_m``, ids ascending."""
        out: dict[int, list[int]] = {}
        for s in self.stations:
            ids = [
                o.id
                for o in self.stations
                if o.id != s.id and math.hypot(o.x - s.x, o.y - s.y) <= self.neighbor_radius_m
            ]
            out[s.id] = sorted(ids)
        return out

    def digest(self) -> str:
        text = "\n".join(
            line for line in dump_config(self).splitlines() if not line.startswith("policy =")
        )
        return hashlib.sha256(text.encode()).hexdigest()


def paper_default_config() -> SimConfig:
    return SimConfig()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: SimConfig) -> str:
    """Canonical text form: fixed section and key order, explicit stations/types."""
    w = cfg.workload
    lines = [
        "[simulation]",
        f"policy = {cfg.policy}",
        f"refresh_fraction = {_fmt(cfg.refresh_fraction)}",
    ]
    if cfg.refresh_period_s is not None:
        lines.append(f"refresh_period_s = {_fmt(cfg.refresh_period_s)}")
    lines += [
        f"drop_threshold = {_fmt(cfg.drop_threshold)}",
        f"tie_tolerance = {_fmt(cfg.tie_tolerance)}",
        f"bp_first_improvement = {_fmt(cfg.bp_first_improvement)}",
        f"trials = {cfg.trials}",
        f"base_seed = {cfg.base_seed}",
    ]
    if cfg.sample_window is not None:
        lines.append(f"sample_window = {cfg.sample_window}")
    lines += [
        f"reference_mips = {_fmt(cfg.reference_mips)}",
        f"return_via_receiving = {_fmt(cfg.return_via_receiving)}",
        "",
        "[network]",
        f"wlan_bandwidth_mbps = {_fmt(cfg.network.wlan_bandwidth_mbps)}",
        f"lan_transfer_delay_s = {_fmt(cfg.network.lan_transfer_delay_s)}",
        f"wan_bandwidth_mbps = {_fmt(cfg.network.wan_bandwidth_mbps)}",
        "",
        "[workload]",
        f"vehicle_count = {w.vehicle_count}",
        f"duration_s = {_fmt(w.duration_s)}",
        f"urgent_fraction = {'catalog' if w.urgent_fraction is None else _fmt(w.urgent_fraction)}",
        f"area_width_m = {_fmt(w.area[0])}",
        f"area_height_m = {_fmt(w.area[1])}",
        f"urgency_mode = {w.urgency_mode}",
        "",
        "[stations]",
        f"neighbor_radius_m = {_fmt(cfg.neighbor_radius_m)}",
    ]
    for s in sorted(cfg.stations, key=lambda s: s.id):
        lines.append(f"station_{s.id} = {_fmt(s.x)}, {_fmt(s.y)}, {s.cores}, {_fmt(s.mips_per_core)}")
    for t in cfg.task_types:
        lines += [
            "",
            f"[type:{t.name}]",
            f"urgent = {_fmt(t.urgent)}",
            f"length_min_mi = {_fmt(t.length_min_mi)}",
            f"length_max_mi = {_fmt(t.length_max_mi)}",
            f"data_up_mb = {_fmt(t.data_up_mb)}",
            f"data_down_mb = {_fmt(t.data_down_mb)}",
            f"slack_s = {_fmt(t.slack_s)}",
            f"rate_per_vehicle_hour = {_fmt(t.rate_per_vehicle_hour)}",
        ]
    return "\n".join(lines) + "\n"


def save_config(cfg: SimConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_config(cfg))


_SIM_KEYS = {
    "policy", "refresh_fraction", "refresh_period_s", "drop_threshold", "tie_tolerance",
    "bp_first_improvement", "trials", "base_seed", "sample_window", "reference_mips",
    "return_via_receiving",
}
_NET_KEYS = {"wlan_bandwidth_mbps", "lan_transfer_delay_s", "wan_bandwidth_mbps"}
_WORK_KEYS = {
    "vehicle_count", "duration_s", "urgent_fraction", "area_width_m", "area_height_m",
    "urgency_mode", "seed",
}
_TYPE_KEYS = {
    "urgent", "length_min_mi", "length_max_mi", "data_up_mb", "data_down_mb",
    "slack_s", "rate_per_vehicle_hour",
}


def _parse(where: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError
        return kind(raw)
    except ValueError:
        raise ConfigurationError(f"{where} {key}: cannot parse {raw!r} as {kind.__name__}") from None


def load_config(path) -> SimConfig:
    """Parse and validate a config file; missing keys fall back to defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}")
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse config file {path}: {exc}") from None
    return parse_config(parser)


def loads_config(text: str) -> SimConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_file(io.StringIO(text))
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse config text: {exc}") from None
    return parse_config(parser)


def parse_config(parser: configparser.ConfigParser) -> SimConfig:
    cfg = SimConfig()

    for section in parser.sections():
        if section not in ("simulation", "network", "workload", "stations") and not section.startswith("type:"):
            raise ConfigurationError(f"unknown config section [{section}]")

    if parser.has_section("simulation"):
        sec = parser["simulation"]
        for key in sec:
            if key not in _SIM_KEYS:
                raise ConfigurationError(f"[simulation] {key}: unknown key")
        where = "[simulation]"
        if "policy" in sec:
            cfg.policy = sec["policy"].strip()
        if "refresh_fraction" in sec:
            cfg.refresh_fraction = _parse(where, "refresh_fraction", sec["refresh_fraction"], float)
        if "refresh_period_s" in sec:
            cfg.refresh_period_s = _parse(where, "refresh_period_s", sec["refresh_period_s"], float)
        if "drop_threshold" in sec:
            cfg.drop_threshold = _parse(where, "drop_threshold", sec["drop_threshold"], float)
        if "tie_tolerance" in sec:
            cfg.tie_tolerance = _parse(where, "tie_tolerance", sec["tie_tolerance"], float)
        if "bp_first_improvement" in sec:
            cfg.bp_first_improvement = _parse(where, "bp_first_improvement", sec["bp_first_improvement"], bool)
        if "trials" in sec:
            cfg.trials = _parse(where, "trials", sec["trials"], int)
        if "base_seed" in sec:
            cfg.base_seed = _parse(where, "base_seed", sec["base_seed"], int)
        if "sample_window" in sec:
            cfg.sample_window = _parse(where, "sample_window", sec["sample_window"], int)
        if "reference_mips" in sec:
            cfg.reference_mips = _parse(where, "reference_mips", sec["reference_mips"], float)
        if "return_via_receiving" in sec:
            cfg.return_via_receiving = _parse(where, "return_via_receiving", sec["return_via_receiving"], bool)

    if parser.has_section("network"):
        sec = parser["network"]
        for key in sec:
            if key not in _NET_KEYS:
                raise ConfigurationError(f"[network] {key}: unknown key")
        kw = {}
        for key in _NET_KEYS:
            if key in sec:
                kw[key] = _parse("[network]", key, sec[key], float)
        try:
            cfg.network = replace(cfg.network, **kw)
        except ValueError as exc:
            raise ConfigurationError(f"[network]: {exc}") from None

    if parser.has_section("workload"):
        sec = parser["workload"]
        for key in sec:
            if key not in _WORK_KEYS:
                raise ConfigurationError(f"[workload] {key}: unknown key")
        where = "[workload]"
        kw = {}
        if "vehicle_count" in sec:
            kw["vehicle_count"] = _parse(where, "vehicle_count", sec["vehicle_count"], int)
        if "duration_s" in sec:
            kw["duration_s"] = _parse(where, "duration_s", sec["duration_s"], float)
        if "urgent_fraction" in sec:
            raw = sec["urgent_fraction"].strip().lower()
            kw["urgent_fraction"] = None if raw in ("catalog", "catalog-default", "") else _parse(
                where, "urgent_fraction", raw, float
            )
        if "area_width_m" in sec or "area_height_m" in sec:
            width = _parse(where, "area_width_m", sec.get("area_width_m", repr(cfg.workload.area[0])), float)
            height = _parse(where, "area_height_m", sec.get("area_height_m", repr(cfg.workload.area[1])), float)
            kw["area"] = (width, height)
        if "urgency_mode" in sec:
            kw["urgency_mode"] = sec["urgency_mode"].strip()
        if "seed" in sec:
            kw["seed"] = _parse(where, "seed", sec["seed"], int)
        try:
            cfg.workload = replace(cfg.workload, **kw)
        except ValueError as exc:
            raise ConfigurationError(f"[workload]: {exc}") from None

    if parser.has_section("stations"):
        sec = parser["stations"]
        explicit = []
        for key in sec:
            if key == "neighbor_radius_m":
                cfg.neighbor_radius_m = _parse("[stations]", key, sec[key], float)
                continue
            if not key.startswith("station_"):
                raise ConfigurationError(f"[stations] {key}: unknown key")
            try:
                sid = int(key.removeprefix("station_"))
            except ValueError:
                raise ConfigurationError(f"[stations] {key}: station id must be an integer") from None
            parts = [p.strip() for p in sec[key].split(",")]
            if len(parts) != 4:
                raise ConfigurationError(f"[stations] {key}: expected 'x, y, cores, mips'")
            where = "[stations]"
            explicit.append(
                StationSpec(
                    id=sid,
                    x=_parse(where, key, parts[0], float),
                    y=_parse(where, key, parts[1], float),
                    cores=_parse(where, key, parts[2], int),
                    mips_per_core=_parse(where, key, parts[3], float),
                )
            )
        if explicit:
            cfg.stations = sorted(explicit, key=lambda s: s.id)

    type_sections = [s for s in parser.sections() if s.startswith("type:")]
    if type_sections:
        catalog = []
        for idx, section in enumerate(type_sections):
            sec = parser[section]
            name = section.removeprefix("type:")
            for key in sec:
                if key not in _TYPE_KEYS:
                    raise ConfigurationError(f"[{section}] {key}: unknown key")
            missing = _TYPE_KEYS - set(sec)
            if missing:
                raise ConfigurationError(f"[{section}]: missing keys {sorted(missing)}")
            where = f"[{section}]"
            try:
                catalog.append(
                    TaskTypeSpec(
                        type_id=idx,
                        name=name,
                        urgent=_parse(where, "urgent", sec["urgent"], bool),
                        length_min_mi=_parse(where, "length_min_mi", sec["length_min_mi"], float),
                        length_max_mi=_parse(where, "length_max_mi", sec["length_max_mi"], float),
                        data_up_mb=_parse(where, "data_up_mb", sec["data_up_mb"], float),
                        data_down_mb=_parse(where, "data_down_mb", sec["data_down_mb"], float),
                        slack_s=_parse(where, "slack_s", sec["slack_s"], float),
                        rate_per_vehicle_hour=_parse(
                            where, "rate_per_vehicle_hour", sec["rate_per_vehicle_hour"], float
                        ),
                    )
                )
            except ValueError as exc:
                raise ConfigurationError(f"{where}: {exc}") from None
        cfg.task_types = catalog

    cfg.validate()
    return cfg
