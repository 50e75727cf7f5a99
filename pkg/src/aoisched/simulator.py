"""Monte Carlo simulation of cyclic and probabilistic generate-at-will schedulers.

Time-average AoI is integrated exactly: between two successive successful
receptions of a source the age is a trapezoid starting at the service time
of the earlier update and ending at the peak.  Standard errors come from
batch means over each source's recorded cycles.

Random streams are SplitMix64 generators, one per source plus one for the
scheduler, whose initial states are drawn from
``numpy.random.SeedSequence(seed, spawn_key=(k,))`` with k = n for source
n (1-based) and k = 0 for the scheduler.  Adding sources leaves existing
sources' streams untouched.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .analysis import Pattern, as_pattern
from .baselines import TransmissionProbabilities
from .errors import ValidationError
from .model import SystemSpec

_KIND_CODES = {"deterministic": _kernels.DETERMINISTIC, "exponential": _kernels.EXPONENTIAL,
               "gamma": _kernels.GAMMA}


@dataclass(frozen=True)
class SimConfig:
    target: int = 1_000_000
    warmup: int = 1_000
    seed: int = 0
    batches: int = 30
    scheduler: Pattern | TransmissionProbabilities | None = None
    record_samples: bool = False
    max_slots: int = 10**12

    def __post_init__(self):
        if self.warmup < 0:
            raise ValidationError("warmup must be >= 0")
        if self.target <= self.warmup:
            raise ValidationError("target must exceed warmup")
        if self.batches < 2 or self.batches > self.target:
            raise ValidationError("need 2 <= batches <= target")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")


def stream_states(seed: int, N: int) -> np.ndarray:
    """Initial SplitMix64 states: index n-1 for source n, index N for the scheduler."""
    states = np.empty(N + 1, dtype=np.uint64)
    for n in range(1, N + 1):
        states[n - 1] = np.random.SeedSequence(int(seed), spawn_key=(n,)).generate_state(1, np.uint64)[0]
    states[N] = np.random.SeedSequence(int(seed), spawn_key=(0,)).generate_state(1, np.uint64)[0]
    return states


@dataclass
class SimEstimates:
    """Per-source estimates with batch-means standard errors.

    ``batch_aoi`` / ``batch_paoi`` are (N, batches) arrays kept for pooling
    replications.
    """

    aoi: np.ndarray
    aoi_se: np.ndarray
    paoi: np.ndarray
    paoi_se: np.ndarray
    updates: np.ndarray
    successes: np.ndarray
    attempts: np.ndarray
    slots: int
    sim_time: float
    weights: np.ndarray
    batch_area: np.ndarray
    batch_dur: np.ndarray
    batch_peak: np.ndarray
    batch_count: np.ndarray
    seed: int | None = None
    samples: dict | None = None
    system_aoi: float = field(init=False)
    system_aoi_se: float = field(init=False)
    system_paoi: float = field(init=False)
    system_paoi_se: float = field(init=False)

    def __post_init__(self):
        w = self.weights
        self.system_aoi = float(np.dot(w, self.aoi))
        self.system_paoi = float(np.dot(w, self.paoi))
        # sources treated as independent
        self.system_aoi_se = float(math.sqrt(np.dot(w * w, self.aoi_se ** 2)))
        self.system_paoi_se = float(math.sqrt(np.dot(w * w, self.paoi_se ** 2)))

    @property
    def N(self) -> int:
        return len(self.aoi)

    @property
    def success_rate(self) -> np.ndarray:
        return self.successes / self.attempts

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "slots": int(self.slots),
            "system_aoi": self.system_aoi,
            "system_aoi_se": self.system_aoi_se,
            "system_paoi": self.system_paoi,
            "system_paoi_se": self.system_paoi_se,
            "sources": [
                {
                    "source": i + 1,
                    "aoi": float(self.aoi[i]),
                    "aoi_se": float(self.aoi_se[i]),
                    "paoi": float(self.paoi[i]),
                    "paoi_se": float(self.paoi_se[i]),
                    "updates": int(self.updates[i]),
                    "attempts": int(self.attempts[i]),
                    "successes": int(self.successes[i]),
                }
                for i in range(self.N)
            ],
        }


def _from_batches(area, dur, peak, cnt, weights, **extra) -> SimEstimates:
    nb = area.shape[1]
    aoi = area.sum(axis=1) / dur.sum(axis=1)
    paoi = peak.sum(axis=1) / cnt.sum(axis=1)
    r_aoi = area / dur
    r_paoi = peak / cnt
    aoi_se = r_aoi.std(axis=1, ddof=1) / math.sqrt(nb)
    paoi_se = r_paoi.std(axis=1, ddof=1) / math.sqrt(nb)
    return SimEstimates(aoi, aoi_se, paoi, paoi_se, cnt.sum(axis=1), weights=np.asarray(weights),
                        batch_area=area, batch_dur=dur, batch_peak=peak, batch_count=cnt, **extra)


def _run(system: SystemSpec, cyclic: bool, pattern_idx, cum_probs, cfg: SimConfig) -> SimEstimates:
    kinds = np.array([_KIND_CODES[src.service.kind] for src in system.sources], dtype=np.int64)
    scovs = np.array([src.service.scov for src in system.sources], dtype=float)
    states = stream_states(cfg.seed, system.N)
    out = _kernels.run(cyclic, pattern_idx, cum_probs, kinds, np.asarray(system.s, dtype=float), scovs,
                       np.asarray(system.u, dtype=float), int(cfg.target), int(cfg.warmup),
                       int(cfg.batches), states, bool(cfg.record_samples), int(cfg.max_slots))
    area, dur, peak, cnt, attempts, successes, slots, sim_time, peaks, resets, durs, done = out
    if done < system.N:
        raise ValidationError(f"simulation hit max_slots={cfg.max_slots} before every source reached its target")
    samples = None
    if cfg.record_samples:
        samples = {"peak": peaks, "reset": resets, "duration": durs}
    return _from_batches(area, dur, peak, cnt, system.w, successes=successes, attempts=attempts,
                         slots=int(slots), sim_time=float(sim_time), seed=int(cfg.seed), samples=samples)


def simulate_cyclic(system: SystemSpec, pattern, cfg: SimConfig = SimConfig()) -> SimEstimates:
    pattern = as_pattern(pattern)
    pattern.check_feasible(system.N)
    return _run(system, True, pattern.as_index_array(), np.zeros(1), cfg)


def simulate_probabilistic(system: SystemSpec, r, cfg: SimConfig = SimConfig()) -> SimEstimates:
    r = getattr(r, "r", r)
    r = TransmissionProbabilities(r).r
    if len(r) != system.N:
        raise ValidationError(f"expected {system.N} probabilities, got {len(r)}")
    cum = np.cumsum(r)
    cum[-1] = 1.0
    return _run(system, False, np.zeros(1, dtype=np.int64), cum, cfg)


def simulate(system: SystemSpec, cfg: SimConfig) -> SimEstimates:
    """Dispatch on ``cfg.scheduler``."""
    sched = cfg.scheduler
    if isinstance(sched, TransmissionProbabilities):
        return simulate_probabilistic(system, sched, cfg)
    if sched is None:
        raise ValidationError("simulation config has no scheduler")
    return simulate_cyclic(system, sched, cfg)


def pool_estimates(runs: Sequence[SimEstimates]) -> SimEstimates:
    """Merge replications: sums pooled, every replication's batches kept as batches."""
    if not runs:
        raise ValidationError("nothing to pool")
    area = np.hstack([r.batch_area for r in runs])
    dur = np.hstack([r.batch_dur for r in runs])
    peak = np.hstack([r.batch_peak for r in runs])
    cnt = np.hstack([r.batch_count for r in runs])
    return _from_batches(area, dur, peak, cnt, runs[0].weights,
                         successes=sum(r.successes for r in runs),
                         attempts=sum(r.attempts for r in runs),
                         slots=sum(r.slots for r in runs),
                         sim_time=sum(r.sim_time for r in runs))


def _replicate(args):
    system, cfg = args
    return simulate(system, cfg)


def run_replications(system: SystemSpec, cfg: SimConfig, seeds: Sequence[int], workers: int = 1) -> SimEstimates:
    cfgs = [SimConfig(cfg.target, cfg.warmup, int(s), cfg.batches, cfg.scheduler, False, cfg.max_slots)
            for s in seeds]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            runs = list(ex.map(_replicate, [(system, c) for c in cfgs]))
    else:
        runs = [simulate(system, c) for c in cfgs]
    return pool_estimates(runs)


@dataclass
class Agreement:
    z_aoi: np.ndarray
    z_paoi: np.ndarray
    threshold: float = 4.0

    @property
    def flags_aoi(self) -> np.ndarray:
        return np.abs(self.z_aoi) > self.threshold

    @property
    def flags_paoi(self) -> np.ndarray:
        return np.abs(self.z_paoi) > self.threshold

    @property
    def ok(self) -> bool:
        return not (self.flags_aoi.any() or self.flags_paoi.any())

    def all_z(self) -> np.ndarray:
        return np.concatenate([self.z_aoi, self.z_paoi])


def _z(est, se, ref):
    est = np.asarray(est, dtype=float)
    se = np.asarray(se, dtype=float)
    ref = np.asarray(ref, dtype=float)
    diff = est - ref
    exact = np.abs(diff) <= 1e-9 * np.maximum(1.0, np.abs(ref))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.sign(diff) * np.inf)
    return np.where(exact & (se <= 0), 0.0, z)


def agreement(est: SimEstimates, report, threshold: float = 4.0) -> Agreement:
    """z = (estimate - analytic) / SE for every source and both metrics.

    ``report`` is anything with per-source ``aoi`` and ``paoi`` arrays.  A
    zero standard error with an exact match gives z = 0.
    """
    return Agreement(_z(est.aoi, est.aoi_se, report.aoi), _z(est.paoi, est.paoi_se, report.paoi), threshold)


def write_paoi_samples(est: SimEstimates, path) -> None:
    """CSV dump of recorded peak-age samples: columns source, index, paoi."""
    if est.samples is None:
        raise ValidationError("run the simulation with record_samples=True to dump samples")
    peaks = est.samples["peak"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["source", "index", "paoi"])
        for n in range(peaks.shape[0]):
            for j, val in enumerate(peaks[n]):
                wr.writerow([n + 1, j, repr(float(val))])
