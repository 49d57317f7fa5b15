"""Allocation policies used by each station's load balancer.

Four policies sit behind one decision interface: ``bp`` picks the candidate
with the best probability of meeting the deadline (convolving completion and
transfer distributions for neighbours, and dropping hopeless tasks), ``mect``
picks the minimum estimated completion mean, ``mc`` the maximum certainty
(remaining time minus completion mean), and ``nr`` never redirects.

All are pure functions of their context and safe to call from any thread.
The selection scans are shared with the simulation kernel so the object API
and the event loop can never disagree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from ._kernels import P_BP, P_MC, P_MECT, POLICY_CODES  # noqa: F401  (re-exported)
from .stochastic import ProfileMatrix


@dataclass(frozen=True)
class CandidateScore:
    """One candidate's score, kept for diagnostics."""

    station: int
    score: float  # probability (bp), completion mean (mect), certainty (mc)
    mu: float
    sigma: float


@dataclass
class AllocationContext:
    """Everything a policy may look at when placing one task.

    ``etc`` is the shared completion-time matrix; ``ett`` is the receiving
    station's own transfer-time matrix keyed by (task type, neighbour id).
    ``task`` needs ``type_id`` and an absolute ``deadline``.
    """

    task: object
    receiving_station: int
    neighbor_ids: Sequence[int]
    etc: ProfileMatrix
    ett: ProfileMatrix
    now: float

    def __post_init__(self):
        if self.receiving_station in self.neighbor_ids:
            raise ValueError("receiving station must not appear in neighbor_ids")


@dataclass
class AllocationDecision:
    """Outcome of one allocation: a target station or a drop."""

    station: int | None  # None means the task is dropped
    probability: float
    candidate_log: list[CandidateScore] = field(default_factory=list)

    @property
    def dropped(self) -> bool:
        return self.station is None


def _gather(ctx: AllocationContext, need_transfer: bool):
    t = ctx.task.type_id
    ids = [ctx.receiving_station, *ctx.neighbor_ids]
    k = len(ids)
    cand = np.asarray(ids, dtype=np.int64)
    mu = np.empty(k)
    sig = np.empty(k)
    tmu = np.zeros(k)
    tsig = np.zeros(k)
    for i, sid in enumerate(ids):
        d = ctx.etc.entry(t, sid)
        mu[i] = d.mu
        sig[i] = d.sigma
        if need_transfer and i > 0:
            e = ctx.ett.entry(t, sid)
            tmu[i] = e.mu
            tsig[i] = e.sigma
    return cand, mu, sig, tmu, tsig


def best_probability(
    ctx: AllocationContext,
    *,
    drop_threshold: float = 1e-9,
    tie_tolerance: float = 1e-9,
    first_improvement: bool = False,
) -> AllocationDecision:
    """Maximize the chance of on-time completion across all candidates.

    The receiving station is judged by its completion distribution alone;
    each neighbour by the convolution of its completion and transfer
    distributions. Ties within ``tie_tolerance`` go to the smaller sigma,
    then the lower station id. A winning probability below
    ``drop_threshold`` drops the task. ``first_improvement`` switches to the
    order-dependent variant that takes the first neighbour beating the
    receiving station instead of the global argmax.
    """
    cand, mu, sig, tmu, tsig = _gather(ctx, need_transfer=True)
    remaining = ctx.task.deadline - ctx.now
    slot, p = _kernels.choose_candidate(
        P_BP, cand, mu, sig, tmu, tsig, remaining, drop_threshold, tie_tolerance, first_improvement
    )
    log = []
    for i in range(len(cand)):
        # slot 0 pays no transfer; same arithmetic as the kernel scan
        m = float(mu[i] + tmu[i])
        s = float(sig[i]) if i == 0 else math.sqrt(sig[i] * sig[i] + tsig[i] * tsig[i])
        log.append(
            CandidateScore(int(cand[i]), float(_kernels.meet_probability(m, s, remaining)), m, s)
        )
    if slot < 0:
        return AllocationDecision(None, 0.0, log)
    return AllocationDecision(int(cand[slot]), float(p), log)


def mect(ctx: AllocationContext) -> AllocationDecision:
    """Minimum estimated completion mean; transfer time deliberately ignored."""
    cand, mu, sig, tmu, tsig = _gather(ctx, need_transfer=False)
    slot, p = _kernels.choose_candidate(P_MECT, cand, mu, sig, tmu, tsig, 0.0, 0.0, 0.0, False)
    log = [CandidateScore(int(cand[i]), float(mu[i]), float(mu[i]), float(sig[i])) for i in range(len(cand))]
    return AllocationDecision(int(cand[slot]), 1.0, log)


def max_certainty(ctx: AllocationContext) -> AllocationDecision:
    """Maximum certainty: remaining time minus estimated completion mean.

    Never drops, even at negative certainty. With the remaining time common
    to every candidate this coincides with ``mect``'s choice.
    """
    cand, mu, sig, tmu, tsig = _gather(ctx, need_transfer=False)
    slot, p = _kernels.choose_candidate(P_MC, cand, mu, sig, tmu, tsig, 0.0, 0.0, 0.0, False)
    remaining = ctx.task.deadline - ctx.now
    log = [
        CandidateScore(int(cand[i]), float(remaining - mu[i]), float(mu[i]), float(sig[i]))
        for i in range(len(cand))
    ]
    return AllocationDecision(int(cand[slot]), 1.0, log)


def no_redirection(ctx: AllocationContext) -> AllocationDecision:
    """Always keep the task at the receiving station."""
    return AllocationDecision(ctx.receiving_station, 1.0, [])


POLICIES: dict[str, Callable[[AllocationContext], AllocationDecision]] = {
    "bp": best_probability,
    "mect": mect,
    "mc": max_certainty,
    "nr": no_redirection,
}
