"""Delay-uncertainty machinery: Normal distributions, their convolution, and
the learned completion-time / transfer-time profile matrices.

Every delay the allocator reasons about is modelled as a Normal distribution
in seconds. Matrices map ``(task_type, station)`` pairs to such distributions
and are re-estimated periodically from the durations observed so far; between
refreshes the published entries stay frozen so decisions are reproducible.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field

from . import _kernels
from .errors import ConfigurationError


@dataclass(frozen=True)
class NormalDist:
    """Gaussian delay model; both parameters in seconds."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)):
            raise ValueError(f"NormalDist parameters must be finite, got mu={self.mu}, sigma={self.sigma}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")


@dataclass(frozen=True)
class DeadlineProbability:
    """Probability of on-time completion plus the distribution it came from."""

    value: float
    source_dist: NormalDist

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"probability out of range: {self.value}")


def convolve(a: NormalDist, b: NormalDist) -> NormalDist:
    """Sum of two independent Normal delays: means add, variances add."""
    return NormalDist(a.mu + b.mu, math.sqrt(a.sigma * a.sigma + b.sigma * b.sigma))


def standard_normal_cdf(z: float) -> float:
    """P(Z < z) for standard normal Z."""
    return _kernels.std_normal_cdf(z)


def prob_meet_deadline(dist: NormalDist, time_remaining: float) -> DeadlineProbability:
    """Chance a delay drawn from ``dist`` fits within ``time_remaining``.

    ``time_remaining`` may be negative (deadline already passed). A
    zero-sigma distribution is treated as a step function.
    """
    return DeadlineProbability(
        _kernels.meet_probability(dist.mu, dist.sigma, time_remaining), dist
    )


@dataclass
class ProfileMatrix:
    """Per-(task type, station) delay distributions with online re-estimation.

    ``entries`` must be bootstrapped for every pair the simulation can touch
    before any sample exists. ``record_sample`` only buffers an observation;
    the published entry changes at the next ``refresh``, and only for pairs
    holding at least two samples. Buffers are cumulative unless ``window``
    limits the refresh to the most recent observations.

    Single-writer: share freely for reading, mutate from one thread only.
    """

    kind: str  # "ETC" | "ETT"
    entries: dict[tuple[int, int], NormalDist]
    window: int | None = None
    buffers: dict[tuple[int, int], list[float]] = field(init=False)

    def __post_init__(self):
        if self.kind not in ("ETC", "ETT"):
            raise ValueError(f"matrix kind must be ETC or ETT, got {self.kind!r}")
        self.buffers = {key: [] for key in self.entries}

    def entry(self, task_type: int, station: int) -> NormalDist:
        try:
            return self.entries[(task_type, station)]
        except KeyError:
            raise ConfigurationError(
                f"{self.kind} matrix has no entry for task type {task_type} at station {station}"
            ) from None

    def record_sample(self, task_type: int, station: int, duration: float) -> None:
        """Buffer one observed duration; does not touch the published entry."""
        if duration < 0:
            raise ValueError(f"duration must be non-negative, got {duration}")
        key = (task_type, station)
        if key not in self.buffers:
            raise ConfigurationError(
                f"{self.kind} matrix has no entry for task type {task_type} at station {station}"
            )
        self.buffers[key].append(duration)

    def refresh(self) -> None:
        """Recompute every entry with >= 2 buffered samples; keep the rest."""
        for key, buf in self.buffers.items():
            samples = buf if self.window is None else buf[-self.window:]
            if len(samples) >= 2:
                self.entries[key] = NormalDist(
                    statistics.fmean(samples), statistics.stdev(samples)
                )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "window": self.window,
            "entries": [
                {"task_type": t, "station": s, "mu": d.mu, "sigma": d.sigma, "samples": len(self.buffers[(t, s)])}
                for (t, s), d in sorted(self.entries.items())
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProfileMatrix":
        entries = {
            (e["task_type"], e["station"]): NormalDist(e["mu"], e["sigma"])
            for e in data["entries"]
        }
        return cls(kind=data["kind"], entries=entries, window=data.get("window"))
