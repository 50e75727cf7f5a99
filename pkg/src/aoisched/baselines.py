"""Reference schedulers: round robin, insertion search and probabilistic GAW."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .analysis import Pattern, PatternReport, evaluate_pattern, report_from_moments
from .errors import ValidationError
from .model import SystemSpec
from .optimize import paoi_frequencies

GRID_MAX_SOURCES = 4


def round_robin(N: int) -> Pattern:
    if N < 1:
        raise ValidationError("need at least one source")
    return Pattern(tuple(range(1, N + 1)))


@dataclass(frozen=True)
class IsConfig:
    max_size: int
    stop_early: bool = False


@dataclass
class IsResult:
    pattern: Pattern
    report: PatternReport
    evaluations: int
    history: list[PatternReport] = field(default_factory=list)


def insertion_search(system: SystemSpec, cfg: IsConfig | int) -> IsResult:
    """Greedy pattern growth from round robin, one best insertion per round.

    Round i -> i+1 tries every source at every one of the i+1 positions and
    keeps the lowest system AoI (ties: lowest source, then lowest position).
    Returns the best pattern over all rounds.
    """
    if isinstance(cfg, int):
        cfg = IsConfig(cfg)
    N = system.N
    if cfg.max_size < N:
        raise ValidationError(f"insertion search size limit {cfg.max_size} is below N={N}")
    current = list(round_robin(N).entries)
    rep = evaluate_pattern(Pattern(tuple(current)), system)
    history = [rep]
    best = rep
    evaluations = 0
    for i in range(N, cfg.max_size):
        round_best = None
        for m in range(1, N + 1):
            for pos in range(i + 1):
                cand = Pattern(tuple(current[:pos] + [m] + current[pos:]))
                r = evaluate_pattern(cand, system)
                evaluations += 1
                if round_best is None or r.system_aoi < round_best[0].system_aoi:
                    round_best = (r, m, pos)
        r, m, pos = round_best
        if cfg.stop_early and r.system_aoi >= rep.system_aoi:
            break
        current = current[:pos] + [m] + current[pos:]
        rep = r
        history.append(rep)
        if rep.system_aoi < best.system_aoi:
            best = rep
    return IsResult(best.pattern, best, evaluations, history)


# ---------------------------------------------------------------------------
# probabilistic GAW


@dataclass(frozen=True)
class TransmissionProbabilities:
    r: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 1 or len(r) == 0:
            raise ValidationError("transmission probabilities must be a non-empty vector")
        if np.any(r <= 0):
            raise ValidationError("every transmission probability must be > 0")
        if abs(r.sum() - 1.0) > 1e-10:
            raise ValidationError(f"transmission probabilities must sum to 1 (got {r.sum()!r})")
        object.__setattr__(self, "r", r)

    @classmethod
    def normalized(cls, r) -> TransmissionProbabilities:
        r = np.asarray(r, dtype=float)
        return cls(r / r.sum())


def _pgaw_moments(r: np.ndarray, s, q, u):
    """Vectorised gap moments; ``r`` may be (N,) or (G, N)."""
    beta = r * u
    mean_slot = (r * s).sum(axis=-1, keepdims=True)
    second_slot = (r * q).sum(axis=-1, keepdims=True)
    # gap = sum of a geometric number (mean (1-beta)/beta) of non-success slots
    s_t = (mean_slot - beta * s) / beta
    q_t = (second_slot - beta * q) / beta + 2.0 * s_t * s_t
    return np.maximum(s_t, 0.0), np.maximum(q_t, 0.0)


def pgaw_tilde_moments(system: SystemSpec, r, n: int | None = None):
    """(s~, q~) of the inter-success gap under i.i.d. slot-wise source choice.

    Returns arrays over all sources, or the pair for 1-based source ``n``.
    """
    r = getattr(r, "r", r)
    r = TransmissionProbabilities(r).r
    if len(r) != system.N:
        raise ValidationError(f"expected {system.N} probabilities, got {len(r)}")
    if np.any(r * system.u <= 0):
        raise ValidationError("a source can never succeed")
    s_t, q_t = _pgaw_moments(r, system.s, system.q, system.u)
    if n is None:
        return s_t, q_t
    return float(s_t[n - 1]), float(q_t[n - 1])


def pgaw_report(system: SystemSpec, r) -> PatternReport:
    s_t, q_t = pgaw_tilde_moments(system, r)
    return report_from_moments(system, s_t, q_t)


def _simplex_grid(N: int, M: int) -> np.ndarray:
    """All strictly positive compositions k/M of 1 into N parts."""
    rows = []
    for cuts in itertools.combinations(range(1, M), N - 1):
        edges = (0,) + cuts + (M,)
        rows.append([edges[i + 1] - edges[i] for i in range(N)])
    return np.asarray(rows, dtype=float).reshape(-1, N) / M


def _system_aoi_grid(system: SystemSpec, R: np.ndarray) -> np.ndarray:
    s, q, u, w = system.s, system.q, system.u, system.w
    s_t, q_t = _pgaw_moments(R, s, q, u)
    aoi = (2 * s * s + 4 * s * s_t + q + q_t) / (2 * (s + s_t))
    return aoi @ w


@dataclass
class PgawStarResult:
    probabilities: TransmissionProbabilities
    report: PatternReport
    metric: str
    evaluations: int = 0


def pgaw_star(system: SystemSpec, metric: str = "aoi", resolution: float = 0.02) -> PgawStarResult:
    """Best probabilistic scheduler for the given metric.

    PAoI: closed-form square-root frequencies.  AoI: exhaustive simplex grid
    at ``resolution``, then a local grid at resolution/10 around the best
    point.
    """
    N = system.N
    if metric == "paoi":
        _, plan = paoi_frequencies(system)
        probs = TransmissionProbabilities.normalized(plan.f)
        return PgawStarResult(probs, pgaw_report(system, probs), metric)
    if metric != "aoi":
        raise ValidationError(f"unknown metric {metric!r}")
    if not (0 < resolution <= 0.1):
        raise ValidationError("grid resolution must be in (0, 0.1]")
    if N == 1:
        probs = TransmissionProbabilities(np.ones(1))
        return PgawStarResult(probs, pgaw_report(system, probs), metric, 1)
    if N > GRID_MAX_SOURCES:
        raise ValidationError(
            f"grid search over {N} sources is intractable; use N <= {GRID_MAX_SOURCES}, "
            "a coarser resolution, or simulate a chosen probability vector"
        )
    M = int(round(1.0 / resolution))
    coarse = _simplex_grid(N, M)
    vals = _system_aoi_grid(system, coarse)
    k = int(np.argmin(vals))
    r0 = coarse[k]
    evaluations = len(coarse)

    h = resolution / 10.0
    steps = np.arange(-10, 11) * h
    offsets = np.array(list(itertools.product(steps, repeat=N - 1)))
    head = r0[:-1] + offsets
    tail = 1.0 - head.sum(axis=1, keepdims=True)
    fine = np.hstack([head, tail])
    fine = fine[np.all(fine > 1e-12, axis=1)]
    fvals = _system_aoi_grid(system, fine)
    evaluations += len(fine)
    j = int(np.argmin(fvals))
    r_best = fine[j] if fvals[j] < vals[k] else r0
    probs = TransmissionProbabilities.normalized(r_best)
    return PgawStarResult(probs, pgaw_report(system, probs), metric, evaluations)
