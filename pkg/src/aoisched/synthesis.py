"""From target frequencies to cyclic patterns, and the SPMS / SAMS pipelines."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .analysis import Pattern, PatternReport, evaluate_pattern
from .errors import InternalInvariantError, ValidationError
from .model import SystemSpec
from .optimize import FrequencyPlan, aoi_frequencies, paoi_frequencies

# relative slack used when rounding products that should be integers
_SNAP = 1e-9


@dataclass(frozen=True)
class QuantizedPlan:
    counts: np.ndarray      # K_n
    K: int
    epsilon: float
    R: int
    f: np.ndarray

    @property
    def N(self) -> int:
        return len(self.counts)

    @property
    def realized(self) -> np.ndarray:
        return self.counts / self.K

    @classmethod
    def from_counts(cls, counts, epsilon: float = float("nan")) -> QuantizedPlan:
        counts = np.asarray(counts, dtype=np.int64)
        if np.any(counts < 1):
            raise ValidationError("every source needs at least one appearance")
        K = int(counts.sum())
        return cls(counts, K, epsilon, K, counts / K)


def _snap(x: np.ndarray) -> np.ndarray:
    r = np.round(x)
    return np.where(np.abs(x - r) <= _SNAP * np.maximum(1.0, np.abs(x)), r, x)


def quantize_frequencies(f, epsilon: float) -> QuantizedPlan:
    """Integer appearance counts K_n with K_n / K close to f_n.

    K = ceil((1 + epsilon) / f_min); each source gets floor(K f_n) and the
    K - R sources with the largest fractional parts one more (lowest index
    first on equal fractional parts).
    """
    if isinstance(f, FrequencyPlan):
        f = f.f
    f = np.asarray(f, dtype=float)
    if epsilon < 0 or not math.isfinite(epsilon):
        raise ValidationError("epsilon must be >= 0")
    if f.ndim != 1 or len(f) == 0 or np.any(f <= 0):
        raise ValidationError("frequencies must be strictly positive")
    f = f / f.sum()
    target = float(_snap(np.array((1.0 + epsilon) / f.min())))
    K = int(math.ceil(target))
    x = _snap(K * f)
    floors = np.floor(x).astype(np.int64)
    frac = x - floors
    R = int(floors.sum())
    extra = K - R
    if not 0 <= extra <= len(f):
        raise InternalInvariantError(f"quantization left {extra} units for {len(f)} sources")
    order = sorted(range(len(f)), key=lambda n: (-frac[n], n))
    counts = floors.copy()
    for n in order[:extra]:
        counts[n] += 1
    if np.any(counts < 1):
        raise InternalInvariantError(f"quantization produced a zero count: {counts.tolist()}")
    return QuantizedPlan(counts, K, float(epsilon), R, f)


# ---------------------------------------------------------------------------
# deficit-counter spreading


@dataclass
class DrrState:
    round: int
    deficits: np.ndarray      # B_n after the quantum was added, before the reset
    selected: int             # 1-based
    quantum: float


def _pick(tied: Sequence[int], prev: int | None, tie_break: str, rng) -> int:
    if len(tied) == 1:
        return tied[0]
    if tie_break == "random":
        return tied[int(rng.integers(len(tied)))]
    for n in tied:
        if n != prev:
            return n
    return tied[0]


def drr_rounds(plan: QuantizedPlan, tie_break: str = "deterministic", rng=None,
               rel_tol: float = 1e-9) -> Iterator[DrrState]:
    """Round-by-round deficit counters, computed literally in floating point.

    O(N K); meant for inspection and for cross-checking :func:`spread_pattern`.
    """
    Kn = plan.counts.astype(float)
    K = float(plan.K)
    B = np.zeros(plan.N)
    prev = None
    if tie_break == "random" and rng is None:
        rng = np.random.default_rng(0)
    for r in range(plan.K):
        score = (1.0 - B) * K / Kn
        q = score.min()
        tied = [int(n) for n in np.flatnonzero(score <= q + rel_tol * max(1.0, abs(q)))]
        m = _pick(tied, prev, tie_break, rng)
        Q = score[m]
        B = B + Q * Kn / K
        yield DrrState(r, B.copy(), m + 1, float(Q))
        B[m] = 0.0
        prev = m


def spread_pattern(plan: QuantizedPlan, tie_break: str = "deterministic", rng=None) -> Pattern:
    """Place source n exactly K_n times, as evenly as possible.

    Equivalent to the deficit-counter rounds: with a variable quantum every
    counter grows at rate K_n / K and the source that reaches 1 first is
    placed, so source n's j-th placement happens at virtual time j K / K_n.
    Sorting those deadlines gives the pattern.  Equal deadlines are exact
    ties (j / K_n is correctly rounded, so distinct rationals never collide
    for K below ~9e7).  A tied group fills consecutive slots, since a placed
    source's next deadline is strictly later; only its internal order
    depends on the tie rule.

    ``tie_break``: "deterministic" (skip the source placed just before when
    another tied source exists, then lowest index) or "random" (uniform
    among tied, from ``rng``).
    """
    if tie_break not in ("deterministic", "random"):
        raise ValidationError(f"unknown tie_break {tie_break!r}")
    if tie_break == "random" and rng is None:
        rng = np.random.default_rng(0)
    counts = np.asarray(plan.counts, dtype=np.int64)
    K = int(counts.sum())
    if K >= 90_000_000:
        raise ValidationError("pattern too large for exact spreading")
    src = np.repeat(np.arange(len(counts)), counts)
    j = np.arange(1, K + 1) - np.repeat(np.cumsum(counts) - counts, counts)
    keys = j / counts[src]
    order = np.lexsort((src, keys))
    keys, src = keys[order], src[order]

    out = src.copy()
    new_group = np.flatnonzero(np.diff(keys) != 0.0) + 1
    bounds = np.concatenate(([0], new_group, [K]))
    multi = np.flatnonzero(np.diff(bounds) > 1)
    for g in multi:
        lo, hi = bounds[g], bounds[g + 1]
        tied = [int(n) for n in src[lo:hi]]
        prev = int(out[lo - 1]) if lo > 0 else None
        for k in range(lo, hi):
            m = _pick(tied, prev, tie_break, rng)
            out[k] = m
            tied.remove(m)
            prev = m
    return Pattern(tuple((out + 1).tolist()))


# ---------------------------------------------------------------------------
# pipelines


@dataclass
class SynthesisResult:
    pattern: Pattern
    report: PatternReport
    plan: FrequencyPlan
    quantized: QuantizedPlan


def spms(system: SystemSpec, epsilon: float = 0.0, tie_break: str = "deterministic", rng=None) -> SynthesisResult:
    """System-PAoI scheduler: square-root frequencies, quantized and spread."""
    _, plan = paoi_frequencies(system)
    q = quantize_frequencies(plan.f, epsilon)
    pattern = spread_pattern(q, tie_break=tie_break, rng=rng)
    return SynthesisResult(pattern, evaluate_pattern(pattern, system), plan, q)


def epsilon_grid(spec: str) -> list[float]:
    """Parse "start:step:stop" (inclusive) or a comma list into epsilon values."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValidationError(f"bad epsilon range {spec!r}; expected start:step:stop")
        try:
            start, step, stop = (float(x) for x in parts)
        except ValueError:
            raise ValidationError(f"bad epsilon range {spec!r}") from None
        if step <= 0 or stop < start:
            raise ValidationError(f"bad epsilon range {spec!r}")
        n = int(math.floor((stop - start) / step + 1e-9))
        return [round(start + i * step, 12) for i in range(n + 1)]
    try:
        return [float(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"bad epsilon list {spec!r}") from None


DEFAULT_EPSILONS = tuple(round(0.2 * i, 12) for i in range(11))


@dataclass(frozen=True)
class SamsConfig:
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    iterations: int = 3
    tie_break: str = "deterministic"

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if not eps:
            raise ValidationError("epsilon set must not be empty")
        if any(e < 0 for e in eps):
            raise ValidationError("epsilon values must be >= 0")
        if self.iterations < 1:
            raise ValidationError("iteration count must be >= 1")
        object.__setattr__(self, "epsilons", eps)


SAMS_1 = SamsConfig(epsilons=(0.0,), iterations=1)
SAMS_2 = SamsConfig(epsilons=DEFAULT_EPSILONS, iterations=1)
SAMS_3 = SamsConfig(epsilons=DEFAULT_EPSILONS, iterations=3)


@dataclass
class SamsCandidate:
    iteration: int
    epsilon: float
    K: int
    system_aoi: float
    chosen: bool = False


@dataclass
class SamsResult:
    pattern: Pattern
    report: PatternReport
    iteration: int
    epsilon: float
    trace: list[SamsCandidate] = field(default_factory=list)
    c_tilde_history: list[np.ndarray] = field(default_factory=list)


def _rank(report: PatternReport):
    return (report.system_aoi, report.K, report.pattern.entries)


def sams(system: SystemSpec, config: SamsConfig = SAMS_3, rng=None) -> SamsResult:
    """System-AoI scheduler: search along gap-scov fixed-point iterations.

    Starts from c~ = p; each iteration solves the AoI allocation for the
    current c~, builds one pattern per epsilon, keeps the round's best and
    feeds its c~ to the next iteration.  Returns the best pattern seen.
    """
    c_tilde = np.asarray(system.p, dtype=float).copy()
    history = [c_tilde.copy()]
    trace: list[SamsCandidate] = []
    best = None
    cache: dict[tuple, PatternReport] = {}
    for ell in range(1, config.iterations + 1):
        sol = aoi_frequencies(system, c_tilde)
        round_best = None
        round_idx = None
        for eps in config.epsilons:
            q = quantize_frequencies(sol.plan.f, eps)
            key = tuple(q.counts.tolist())
            rep = cache.get(key) if config.tie_break == "deterministic" else None
            if rep is None:
                pat = spread_pattern(q, tie_break=config.tie_break, rng=rng)
                rep = evaluate_pattern(pat, system)
                cache[key] = rep
            trace.append(SamsCandidate(ell, eps, q.K, rep.system_aoi))
            if round_best is None or _rank(rep) < _rank(round_best[0]):
                round_best = (rep, eps)
                round_idx = len(trace) - 1
        trace[round_idx].chosen = True
        rep, eps = round_best
        if best is None or _rank(rep) < _rank(best[0]):
            best = (rep, ell, eps)
        c_tilde = np.asarray(rep.c_tilde, dtype=float).copy()
        history.append(c_tilde.copy())
    rep, ell, eps = best
    return SamsResult(rep.pattern, rep, ell, eps, trace, history)
