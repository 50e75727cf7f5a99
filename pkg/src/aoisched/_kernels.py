"""Compiled inner loop of the Monte Carlo simulator.

Random numbers: one SplitMix64 stream per source (service times and
success draws of that source) plus one scheduler stream (slot-wise source
choice under probabilistic scheduling).  Stream states are seeded by the
caller.
"""
import math

import numpy as np
from numba import njit

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

DETERMINISTIC, EXPONENTIAL, GAMMA = 0, 1, 2
REBASE_AT = 1.0e6


@njit(cache=True, inline="always")
def _next_u64(states, i):
    x = states[i] + _GAMMA
    states[i] = x
    z = (x ^ (x >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def _uniform(states, i):
    # open interval (0, 1)
    return (float(_next_u64(states, i) >> _S11) + 0.5) * _INV53


@njit(cache=True)
def _normal(states, i):
    u1 = _uniform(states, i)
    u2 = _uniform(states, i)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@njit(cache=True)
def _gamma(states, i, shape, scale):
    # Marsaglia-Tsang squeeze/rejection; shape < 1 boosted by U^(1/shape)
    boost = 1.0
    k = shape
    if k < 1.0:
        boost = _uniform(states, i) ** (1.0 / k)
        k = k + 1.0
    d = k - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = _normal(states, i)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        uu = _uniform(states, i)
        if uu < 1.0 - 0.0331 * x * x * x * x:
            return d * v * scale * boost
        if math.log(uu) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
            return d * v * scale * boost


@njit(cache=True)
def _service(states, i, kind, mean, scov):
    if kind == DETERMINISTIC:
        return mean
    if kind == EXPONENTIAL:
        return -mean * math.log(_uniform(states, i))
    return _gamma(states, i, 1.0 / scov, mean * scov)


@njit(cache=True)
def run(cyclic, pattern, cum_probs, kinds, means, scovs, succ, target, warmup, n_batches,
        states, record, max_slots):
    """Simulate until every source has ``warmup + target`` completed AoI cycles.

    A cycle of source n runs between two successive successful receptions.
    Returns per-source batch sums of (area, duration, peak) and counts, the
    attempt/success tallies, slot count, simulated time and, when
    ``record`` is set, the recorded peak samples plus the reset value and
    duration of every recorded cycle.
    """
    N = kinds.shape[0]
    K = pattern.shape[0]
    sched = N  # scheduler stream index

    b_area = np.zeros((N, n_batches))
    b_dur = np.zeros((N, n_batches))
    b_peak = np.zeros((N, n_batches))
    b_cnt = np.zeros((N, n_batches), dtype=np.int64)
    attempts = np.zeros(N, dtype=np.int64)
    successes = np.zeros(N, dtype=np.int64)
    cycles = np.zeros(N, dtype=np.int64)
    have = np.zeros(N, dtype=np.bool_)
    last_gen = np.zeros(N)
    last_recv = np.zeros(N)
    last_s = np.zeros(N)
    # running sums of the open batch; flushed when the batch boundary is hit
    cur_area = np.zeros(N)
    cur_dur = np.zeros(N)
    cur_peak = np.zeros(N)
    batch = np.zeros(N, dtype=np.int64)
    boundary = np.empty(n_batches, dtype=np.int64)
    for b in range(n_batches):
        # first recorded-cycle index of batch b + 1
        boundary[b] = warmup + ((b + 1) * target + n_batches - 1) // n_batches
    next_flush = np.full(N, boundary[0], dtype=np.int64)
    if record:
        peaks = np.zeros((N, target))
        resets = np.zeros((N, target))
        durs = np.zeros((N, target))
    else:
        peaks = np.zeros((N, 0))
        resets = np.zeros((N, 0))
        durs = np.zeros((N, 0))

    t = 0.0
    offset = 0.0
    slot = 0
    pos = 0
    done = 0
    stop_at = warmup + target
    while done < N:
        if cyclic:
            n = pattern[pos]
            pos += 1
            if pos == K:
                pos = 0
        else:
            x = _uniform(states, sched)
            n = 0
            while n < N - 1 and x >= cum_probs[n]:
                n += 1
        S = _service(states, n, kinds[n], means[n], scovs[n])
        t_end = t + S
        attempts[n] += 1
        if _uniform(states, n) < succ[n]:
            successes[n] += 1
            c = cycles[n]
            if have[n] and c < stop_at:
                if c >= warmup:
                    D = t_end - last_recv[n]
                    peak = t_end - last_gen[n]
                    cur_area[n] += 0.5 * D * (last_s[n] + peak)
                    cur_dur[n] += D
                    cur_peak[n] += peak
                    if record:
                        j = c - warmup
                        peaks[n, j] = peak
                        resets[n, j] = last_s[n]
                        durs[n, j] = D
                    if c + 1 == next_flush[n]:
                        b = batch[n]
                        b_area[n, b] = cur_area[n]
                        b_dur[n, b] = cur_dur[n]
                        b_peak[n, b] = cur_peak[n]
                        lo = warmup if b == 0 else boundary[b - 1]
                        b_cnt[n, b] = c + 1 - lo
                        cur_area[n] = 0.0
                        cur_dur[n] = 0.0
                        cur_peak[n] = 0.0
                        batch[n] = b + 1
                        if b + 1 < n_batches:
                            next_flush[n] = boundary[b + 1]
                        else:
                            done += 1
                cycles[n] = c + 1
            elif not have[n]:
                have[n] = True
            last_gen[n] = t
            last_recv[n] = t_end
            last_s[n] = S
        t = t_end
        slot += 1
        if t > REBASE_AT:
            # keep absolute times small so differences stay exact-ish
            for m in range(N):
                last_gen[m] -= t
                last_recv[m] -= t
            offset += t
            t = 0.0
        if slot >= max_slots:
            break
    return (b_area, b_dur, b_peak, b_cnt, attempts, successes, slot, offset + t,
            peaks, resets, durs, done)
