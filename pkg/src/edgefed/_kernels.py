"""Hot kernels: scalar probability math, allocation scans, and the event loop.

Everything here is written against flat numpy arrays and scalars so the whole
simulation of one trial runs as a single compiled unit (see
:mod:`edgefed.accel`). Matrices are flattened row-major:

* completion-time matrix: index ``type * n_stations + station``
* transfer-time matrices: index ``(owner * n_types + type) * n_stations + dest``

Station and type indices inside the kernel are dense positions (0..S-1,
0..T-1); tie-breaking on "lower station id" uses the caller-provided array of
real station ids.
"""

import math

import numpy as np

from .accel import maybe_jit

_SQRT2 = math.sqrt(2.0)

# Event kinds. Numeric order doubles as the tie-break priority for events that
# share a timestamp: completions before arrivals before refreshes.
EV_EXEC_COMPLETE = 0
EV_TRANSFER_COMPLETE = 1
EV_ARRIVAL = 2
EV_REFRESH = 3
EV_EXEC_START = 4  # trace-only; starts are handled inline, never queued

# Task status codes.
ST_PENDING = 0
ST_TRANSFERRING = 1
ST_QUEUED = 2
ST_EXECUTING = 3
ST_ON_TIME = 4
ST_LATE = 5
ST_DROPPED = 6

# Policy codes.
P_BP = 0
P_MECT = 1
P_MC = 2
P_NR = 3

POLICY_CODES = {"bp": P_BP, "mect": P_MECT, "mc": P_MC, "nr": P_NR}


@maybe_jit
def std_normal_cdf(z):
    """CDF of the standard normal via the C library error function."""
    return 0.5 * (1.0 + math.erf(z / _SQRT2))


@maybe_jit
def meet_probability(mu, sigma, time_remaining):
    """Chance a N(mu, sigma) duration fits in ``time_remaining`` seconds.

    A zero-sigma distribution degenerates to a step: 1 when the remaining
    time exceeds the mean, else 0.
    """
    if sigma > 0.0:
        return std_normal_cdf((time_remaining - mu) / sigma)
    return 1.0 if time_remaining > mu else 0.0


@maybe_jit
def deadline_z(mu, sigma, time_remaining):
    """Standardized margin (time_remaining - mu) / sigma; +/-inf for sigma = 0.

    The CDF is strictly increasing, so ranking candidates by z is ranking by
    probability, without the float64 saturation that collapses every z
    beyond ~8.3 to probability 1.0 (and everything past ~6 into a 1e-9 tie
    band). Ranking happens in z space; reported probabilities still go
    through the CDF.
    """
    if sigma > 0.0:
        return (time_remaining - mu) / sigma
    return math.inf if time_remaining > mu else -math.inf


@maybe_jit
def choose_candidate(
    policy,
    cand_ids,
    mu_c,
    sig_c,
    tmu_c,
    tsig_c,
    remaining,
    drop_threshold,
    tie_tol,
    first_improvement,
):
    """Pick a destination among candidates; slot 0 is the receiving station.

    ``mu_c``/``sig_c`` hold per-candidate completion-time entries;
    ``tmu_c``/``tsig_c`` hold the transfer-time entries (zero for slot 0,
    which pays no transfer). Returns ``(slot, probability)``; slot -1 means
    drop. Probabilities are compared as standardized margins (see
    ``deadline_z``); ties within ``tie_tol`` (z units) go to the smaller
    combined sigma, then the lower real station id in ``cand_ids``.
    """
    n = cand_ids.shape[0]
    if policy == P_NR:
        return 0, 1.0
    if policy == P_MECT or policy == P_MC:
        # Certainty argmax equals mean argmin when every candidate sees the
        # same remaining time, so both baselines share this scan. Scanning
        # receiving-first keeps the task local on exact ties.
        best = 0
        for k in range(1, n):
            if mu_c[k] < mu_c[best]:
                best = k
        return best, 1.0

    best = 0
    best_sig = sig_c[0]
    best_z = deadline_z(mu_c[0], best_sig, remaining)
    if first_improvement:
        # Literal pseudocode variant: take the first neighbour that beats the
        # receiving station (every comparison is against slot 0).
        z_r = best_z
        sig_r = best_sig
        for k in range(1, n):
            sig = math.sqrt(sig_c[k] * sig_c[k] + tsig_c[k] * tsig_c[k])
            z = deadline_z(mu_c[k] + tmu_c[k], sig, remaining)
            if z > z_r + tie_tol:
                best = k
                best_z = z
                best_sig = sig
                break
            if _z_tie(z, z_r, tie_tol) and sig < sig_r:
                best = k
                best_z = z
                best_sig = sig
                break
    else:
        for k in range(1, n):
            sig = math.sqrt(sig_c[k] * sig_c[k] + tsig_c[k] * tsig_c[k])
            z = deadline_z(mu_c[k] + tmu_c[k], sig, remaining)
            if z > best_z + tie_tol:
                best = k
                best_z = z
                best_sig = sig
            elif _z_tie(z, best_z, tie_tol):
                if sig < best_sig or (sig == best_sig and cand_ids[k] < cand_ids[best]):
                    best = k
                    best_z = z
                    best_sig = sig
    # slot 0 carries zero transfer entries, so this is uniform
    best_p = meet_probability(mu_c[best] + tmu_c[best], best_sig, remaining)
    if best_p < drop_threshold:
        return -1, best_p
    return best, best_p


@maybe_jit
def _z_tie(za, zb, tol):
    """Margins tie when within tol, or when both sit on the same infinity."""
    if za == zb:
        return True
    return abs(za - zb) <= tol


@maybe_jit
def refresh_from_log(mu_flat, sig_flat, log_pair, log_val, n_log, window):
    """Recompute entries from their full sample history (two-pass).

    Entries with fewer than two samples keep their current value. When
    ``window`` > 0 only the most recent ``window`` samples per pair count.
    """
    m = mu_flat.shape[0]
    cnt = np.zeros(m, np.int64)
    sm = np.zeros(m, np.float64)
    if window > 0:
        for k in range(n_log - 1, -1, -1):
            p = log_pair[k]
            if cnt[p] < window:
                cnt[p] += 1
                sm[p] += log_val[k]
    else:
        for k in range(n_log):
            p = log_pair[k]
            cnt[p] += 1
            sm[p] += log_val[k]
    mean = np.zeros(m, np.float64)
    for p in range(m):
        if cnt[p] > 0:
            mean[p] = sm[p] / cnt[p]
    ss = np.zeros(m, np.float64)
    if window > 0:
        seen = np.zeros(m, np.int64)
        for k in range(n_log - 1, -1, -1):
            p = log_pair[k]
            if seen[p] < window:
                seen[p] += 1
                d = log_val[k] - mean[p]
                ss[p] += d * d
    else:
        for k in range(n_log):
            p = log_pair[k]
            d = log_val[k] - mean[p]
            ss[p] += d * d
    for p in range(m):
        if cnt[p] >= 2:
            mu_flat[p] = mean[p]
            sig_flat[p] = math.sqrt(ss[p] / (cnt[p] - 1))


@maybe_jit
def _heap_less(ht, hk, hs, i, j):
    if ht[i] != ht[j]:
        return ht[i] < ht[j]
    if hk[i] != hk[j]:
        return hk[i] < hk[j]
    return hs[i] < hs[j]


@maybe_jit
def _heap_swap(ht, hk, hs, ha, hb, hc, i, j):
    ht[i], ht[j] = ht[j], ht[i]
    hk[i], hk[j] = hk[j], hk[i]
    hs[i], hs[j] = hs[j], hs[i]
    ha[i], ha[j] = ha[j], ha[i]
    hb[i], hb[j] = hb[j], hb[i]
    hc[i], hc[j] = hc[j], hc[i]


@maybe_jit
def _heap_push(ht, hk, hs, ha, hb, hc, size, t, kind, seq, task, aux, aux2):
    i = size
    ht[i] = t
    hk[i] = kind
    hs[i] = seq
    ha[i] = task
    hb[i] = aux
    hc[i] = aux2
    while i > 0:
        parent = (i - 1) // 2
        if _heap_less(ht, hk, hs, i, parent):
            _heap_swap(ht, hk, hs, ha, hb, hc, i, parent)
            i = parent
        else:
            break
    return size + 1


@maybe_jit
def _heap_pop(ht, hk, hs, ha, hb, hc, size):
    """Remove the root; caller must read root fields before calling."""
    last = size - 1
    if last > 0:
        _heap_swap(ht, hk, hs, ha, hb, hc, 0, last)
        i = 0
        while True:
            left = 2 * i + 1
            if left >= last:
                break
            child = left
            right = left + 1
            if right < last and _heap_less(ht, hk, hs, right, left):
                child = right
            if _heap_less(ht, hk, hs, child, i):
                _heap_swap(ht, hk, hs, ha, hb, hc, i, child)
                i = child
            else:
                break
    return last


@maybe_jit
def run_sim(
    # per-task inputs, sorted ascending by station-arrival time t_bs
    t_bs,
    arr,
    tt,
    length,
    up_d,
    down_d,
    deadline,
    recv,
    orig_id,
    # topology (dense indices; station_ids maps dense -> real id)
    station_ids,
    mips,
    n_cores,
    nbr_indptr,
    nbr_ids,
    # matrices, flattened, mutated in place
    etc_mu,
    etc_sig,
    ett_mu,
    ett_sig,
    # policy and model parameters
    policy,
    first_improvement,
    drop_threshold,
    tie_tol,
    lan_delay,
    refresh_every,
    refresh_period,
    sample_window,
    return_via_receiving,
    # per-task outputs (preallocated by caller)
    status,
    exec_st,
    enq_t,
    start_t,
    comp_t,
    dec_prob,
    # event trace (preallocated; used only when trace_on)
    trace_on,
    ev_time,
    ev_kind,
    ev_task,
    ev_station,
    ev_status,
):
    """Drive one trial to completion. Returns (transfers, n_events, n_etc, n_ett,
    etc_log_pair, etc_log_val, ett_log_pair, ett_log_val)."""
    n = t_bs.shape[0]
    S = mips.shape[0]
    T = etc_mu.shape[0] // S
    ev_cap = ev_time.shape[0]

    # cumulative sample logs feeding the matrix refreshes
    etc_log_pair = np.empty(n, np.int64)
    etc_log_val = np.empty(n, np.float64)
    n_etc = 0
    ett_log_pair = np.empty(n, np.int64)
    ett_log_val = np.empty(n, np.float64)
    n_ett = 0

    # FIFO queue per station as an intrusive linked list
    q_head = np.full(S, -1, np.int64)
    q_tail = np.full(S, -1, np.int64)
    q_next = np.full(n, -1, np.int64)

    cmax = 0
    for s in range(S):
        if n_cores[s] > cmax:
            cmax = n_cores[s]
    core_busy = np.zeros((S, cmax), np.uint8)
    free_cnt = np.empty(S, np.int64)
    for s in range(S):
        free_cnt[s] = n_cores[s]
        for c in range(n_cores[s], cmax):
            core_busy[s, c] = 1

    # candidate scratch for allocation decisions
    cand_real = np.empty(S, np.int64)
    cand_dense = np.empty(S, np.int64)
    cmu = np.empty(S, np.float64)
    csig = np.empty(S, np.float64)
    ctmu = np.empty(S, np.float64)
    ctsig = np.empty(S, np.float64)

    heap_cap = 2 * n + 64
    ht = np.empty(heap_cap, np.float64)
    hk = np.empty(heap_cap, np.int64)
    hs = np.empty(heap_cap, np.int64)
    ha = np.empty(heap_cap, np.int64)  # task
    hb = np.empty(heap_cap, np.int64)  # station (dense)
    hc = np.empty(heap_cap, np.int64)  # core
    hsize = 0
    seq = n  # arrival events own sequence numbers 0..n-1

    transfers = 0
    completions = 0
    finished = 0
    n_ev = 0
    next_arr = 0

    if refresh_period > 0.0 and n > 0:
        hsize = _heap_push(ht, hk, hs, ha, hb, hc, hsize, refresh_period, EV_REFRESH, seq, -1, -1, -1)
        seq += 1

    while hsize > 0 or next_arr < n:
        take_heap = False
        if hsize > 0:
            if next_arr >= n:
                take_heap = True
            else:
                ta = t_bs[next_arr]
                if ht[0] < ta or (
                    ht[0] == ta and (hk[0] < EV_ARRIVAL or (hk[0] == EV_ARRIVAL and hs[0] < next_arr))
                ):
                    take_heap = True

        if not take_heap:
            i = next_arr
            next_arr += 1
            now = t_bs[i]
            r = recv[i]
            t = tt[i]
            if policy == P_NR:
                dest = r
                p = 1.0
            else:
                cand_real[0] = station_ids[r]
                cand_dense[0] = r
                cmu[0] = etc_mu[t * S + r]
                csig[0] = etc_sig[t * S + r]
                ctmu[0] = 0.0
                ctsig[0] = 0.0
                k = 1
                for q in range(nbr_indptr[r], nbr_indptr[r + 1]):
                    j = nbr_ids[q]
                    cand_real[k] = station_ids[j]
                    cand_dense[k] = j
                    cmu[k] = etc_mu[t * S + j]
                    csig[k] = etc_sig[t * S + j]
                    ctmu[k] = ett_mu[(r * T + t) * S + j]
                    ctsig[k] = ett_sig[(r * T + t) * S + j]
                    k += 1
                slot, p = choose_candidate(
                    policy,
                    cand_real[:k],
                    cmu[:k],
                    csig[:k],
                    ctmu[:k],
                    ctsig[:k],
                    deadline[i] - now,
                    drop_threshold,
                    tie_tol,
                    first_improvement,
                )
                dest = -1 if slot < 0 else cand_dense[slot]
            if dest < 0:
                status[i] = ST_DROPPED
                dec_prob[i] = 0.0
                finished += 1
                if trace_on and n_ev < ev_cap:
                    ev_time[n_ev] = now
                    ev_kind[n_ev] = EV_ARRIVAL
                    ev_task[n_ev] = orig_id[i]
                    ev_station[n_ev] = station_ids[r]
                    ev_status[n_ev] = ST_DROPPED
                    n_ev += 1
                continue
            dec_prob[i] = p
            if dest != r:
                transfers += 1
                status[i] = ST_TRANSFERRING
                if trace_on and n_ev < ev_cap:
                    ev_time[n_ev] = now
                    ev_kind[n_ev] = EV_ARRIVAL
                    ev_task[n_ev] = orig_id[i]
                    ev_station[n_ev] = station_ids[r]
                    ev_status[n_ev] = ST_TRANSFERRING
                    n_ev += 1
                hsize = _heap_push(
                    ht, hk, hs, ha, hb, hc, hsize, now + lan_delay, EV_TRANSFER_COMPLETE, seq, i, dest, -1
                )
                seq += 1
                continue
            # local assignment enters the queue at this timestamp
            if trace_on and n_ev < ev_cap:
                ev_time[n_ev] = now
                ev_kind[n_ev] = EV_ARRIVAL
                ev_task[n_ev] = orig_id[i]
                ev_station[n_ev] = station_ids[r]
                ev_status[n_ev] = ST_QUEUED
                n_ev += 1
            kind = -1  # fall through to enqueue below
            task = i
            st = r
        else:
            now = ht[0]
            kind = hk[0]
            task = ha[0]
            st = hb[0]
            core = hc[0]
            hsize = _heap_pop(ht, hk, hs, ha, hb, hc, hsize)

            if kind == EV_REFRESH:
                refresh_from_log(etc_mu, etc_sig, etc_log_pair, etc_log_val, n_etc, sample_window)
                refresh_from_log(ett_mu, ett_sig, ett_log_pair, ett_log_val, n_ett, sample_window)
                if trace_on and n_ev < ev_cap:
                    ev_time[n_ev] = now
                    ev_kind[n_ev] = EV_REFRESH
                    ev_task[n_ev] = -1
                    ev_station[n_ev] = -1
                    ev_status[n_ev] = -1
                    n_ev += 1
                if finished < n:
                    hsize = _heap_push(
                        ht, hk, hs, ha, hb, hc, hsize, now + refresh_period, EV_REFRESH, seq, -1, -1, -1
                    )
                    seq += 1
                continue

            if kind == EV_EXEC_COMPLETE:
                comp_t[task] = now
                # the completion-time sample spans queue wait plus service
                pair = tt[task] * S + st
                etc_log_pair[n_etc] = pair
                etc_log_val[n_etc] = now - enq_t[task]
                n_etc += 1
                extra = 0.0
                if return_via_receiving and st != recv[task]:
                    extra = lan_delay
                if now + extra + down_d[task] <= deadline[task]:
                    status[task] = ST_ON_TIME
                else:
                    status[task] = ST_LATE
                finished += 1
                completions += 1
                if trace_on and n_ev < ev_cap:
                    ev_time[n_ev] = now
                    ev_kind[n_ev] = EV_EXEC_COMPLETE
                    ev_task[n_ev] = orig_id[task]
                    ev_station[n_ev] = station_ids[st]
                    ev_status[n_ev] = status[task]
                    n_ev += 1
                if refresh_every > 0 and completions % refresh_every == 0:
                    refresh_from_log(etc_mu, etc_sig, etc_log_pair, etc_log_val, n_etc, sample_window)
                    refresh_from_log(ett_mu, ett_sig, ett_log_pair, ett_log_val, n_ett, sample_window)
                    if trace_on and n_ev < ev_cap:
                        ev_time[n_ev] = now
                        ev_kind[n_ev] = EV_REFRESH
                        ev_task[n_ev] = -1
                        ev_station[n_ev] = -1
                        ev_status[n_ev] = -1
                        n_ev += 1
                # hand the freed core to the queue head
                if q_head[st] >= 0:
                    j = q_head[st]
                    q_head[st] = q_next[j]
                    if q_head[st] < 0:
                        q_tail[st] = -1
                    status[j] = ST_EXECUTING
                    start_t[j] = now
                    exec_st[j] = st
                    if trace_on and n_ev < ev_cap:
                        ev_time[n_ev] = now
                        ev_kind[n_ev] = EV_EXEC_START
                        ev_task[n_ev] = orig_id[j]
                        ev_station[n_ev] = station_ids[st]
                        ev_status[n_ev] = ST_EXECUTING
                        n_ev += 1
                    hsize = _heap_push(
                        ht, hk, hs, ha, hb, hc, hsize,
                        now + length[j] / mips[st], EV_EXEC_COMPLETE, seq, j, st, core,
                    )
                    seq += 1
                else:
                    core_busy[st, core] = 0
                    free_cnt[st] += 1
                continue

            # EV_TRANSFER_COMPLETE: record the realized transfer duration in
            # the receiving station's transfer matrix, then enqueue at dest.
            triple = (recv[task] * T + tt[task]) * S + st
            ett_log_pair[n_ett] = triple
            ett_log_val[n_ett] = now - t_bs[task]
            n_ett += 1
            if trace_on and n_ev < ev_cap:
                ev_time[n_ev] = now
                ev_kind[n_ev] = EV_TRANSFER_COMPLETE
                ev_task[n_ev] = orig_id[task]
                ev_station[n_ev] = station_ids[st]
                ev_status[n_ev] = ST_QUEUED
                n_ev += 1

        # enqueue `task` at station `st` at time `now`
        enq_t[task] = now
        if free_cnt[st] > 0:
            core = -1
            for c in range(n_cores[st]):
                if core_busy[st, c] == 0:
                    core = c
                    break
            core_busy[st, core] = 1
            free_cnt[st] -= 1
            status[task] = ST_EXECUTING
            start_t[task] = now
            exec_st[task] = st
            if trace_on and n_ev < ev_cap:
                ev_time[n_ev] = now
                ev_kind[n_ev] = EV_EXEC_START
                ev_task[n_ev] = orig_id[task]
                ev_station[n_ev] = station_ids[st]
                ev_status[n_ev] = ST_EXECUTING
                n_ev += 1
            hsize = _heap_push(
                ht, hk, hs, ha, hb, hc, hsize,
                now + length[task] / mips[st], EV_EXEC_COMPLETE, seq, task, st, core,
            )
            seq += 1
        else:
            status[task] = ST_QUEUED
            if q_tail[st] < 0:
                q_head[st] = task
            else:
                q_next[q_tail[st]] = task
            q_tail[st] = task

    return (
        transfers,
        n_ev,
        n_etc,
        n_ett,
        etc_log_pair[:n_etc],
        etc_log_val[:n_etc],
        ett_log_pair[:n_ett],
        ett_log_val[:n_ett],
    )
