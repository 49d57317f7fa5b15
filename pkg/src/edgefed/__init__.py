"""edgefed: discrete-event simulation of federated edge base stations serving
deadline-constrained vehicular tasks, with uncertainty-aware load balancing."""

from .accel import NUMBA_ENABLED
from .config import SimConfig, StationSpec, load_config, paper_default_config
from .errors import ConfigurationError, UndefinedMetricError
from .heuristics import (
    AllocationContext,
    AllocationDecision,
    best_probability,
    max_certainty,
    mect,
    no_redirection,
    POLICIES,
)
from .metrics import MetricsReport, TrialAggregate, aggregate, miss_rate, per_station_miss_rate
from .simcore import NetworkModel, Task, TaskStatus, run
from .stochastic import NormalDist, ProfileMatrix, convolve, prob_meet_deadline, standard_normal_cdf
from .workload import TaskTypeSpec, WorkloadConfig, default_task_catalog, generate, nearest_station

__version__ = "0.1.0"

__all__ = [
    "AllocationContext",
    "AllocationDecision",
    "ConfigurationError",
    "MetricsReport",
    "NetworkModel",
    "NormalDist",
    "NUMBA_ENABLED",
    "POLICIES",
    "ProfileMatrix",
    "SimConfig",
    "StationSpec",
    "Task",
    "TaskStatus",
    "TaskTypeSpec",
    "TrialAggregate",
    "UndefinedMetricError",
    "WorkloadConfig",
    "aggregate",
    "best_probability",
    "convolve",
    "default_task_catalog",
    "generate",
    "load_config",
    "max_certainty",
    "mect",
    "miss_rate",
    "nearest_station",
    "no_redirection",
    "paper_default_config",
    "per_station_miss_rate",
    "prob_meet_deadline",
    "run",
    "standard_normal_cdf",
    "__version__",
]
