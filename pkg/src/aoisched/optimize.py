"""Target link utilizations and transmission frequencies.

Two convex allocation problems over utilizations tau (sum tau = 1):

* system PAoI, sum_n w_n s_n / (u_n tau_n) + const, solved by a square-root law;
* system AoI for fixed gap scovs, sum_n a_n tau_n + b_n / tau_n, whose KKT
  conditions reduce to a scalar monotone equation solved by bisection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InternalInvariantError, ValidationError
from .model import SystemSpec


@dataclass(frozen=True)
class UtilizationVector:
    tau: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        if np.any(tau <= 0):
            raise ValidationError("utilizations must be strictly positive")
        if abs(tau.sum() - 1.0) > 1e-10:
            raise ValidationError(f"utilizations must sum to 1 (got {tau.sum()!r})")
        object.__setattr__(self, "tau", tau)

    def periods(self, system: SystemSpec) -> np.ndarray:
        """T_n = s_n / tau_n: inter-transmission period that realises tau_n."""
        return system.s / self.tau


@dataclass(frozen=True)
class FrequencyPlan:
    f: np.ndarray
    tau: np.ndarray
    provenance: str

    @property
    def f_min(self) -> float:
        return float(self.f.min())

    @property
    def N(self) -> int:
        return len(self.f)


def frequencies_from_utilizations(tau, s) -> np.ndarray:
    x = np.asarray(tau, dtype=float) / np.asarray(s, dtype=float)
    return x / x.sum()


def paoi_frequencies(system: SystemSpec) -> tuple[UtilizationVector, FrequencyPlan]:
    w, s, u = system.w, system.s, system.u
    tau = np.sqrt(w * s / u)
    tau = tau / tau.sum()
    f = np.sqrt(w / (s * u))
    f = f / f.sum()
    return UtilizationVector(tau), FrequencyPlan(f, tau, "paoi_closed_form")


def paoi_objective(system: SystemSpec, tau) -> float:
    tau = np.asarray(getattr(tau, "tau", tau), dtype=float)
    if np.any(tau <= 0):
        raise ValidationError("utilizations must be strictly positive")
    w, s, u = system.w, system.s, system.u
    return float(np.sum(w * s / (u * tau)) + np.sum(w * s))


@dataclass(frozen=True)
class AoiProgramCoefficients:
    a_n: np.ndarray
    b_n: np.ndarray

    @property
    def a(self) -> float:
        return float(np.min(self.a_n))

    def objective(self, tau) -> float:
        tau = np.asarray(tau, dtype=float)
        return float(np.sum(self.a_n * tau + self.b_n / tau))

    def fixed_point_residual(self, x: float) -> float:
        return float(np.sum(np.sqrt(self.b_n / (self.a_n - x))) - 1.0)


def aoi_coefficients(system: SystemSpec, c_tilde) -> AoiProgramCoefficients:
    ct = np.asarray(c_tilde, dtype=float)
    if ct.shape != (system.N,):
        raise ValidationError(f"expected {system.N} gap scov values, got shape {ct.shape}")
    if np.any(ct < 0):
        raise ValidationError("gap scov values must be >= 0")
    w, s, u, c = system.w, system.s, system.u, system.c
    a_n = w * s * u * (c + ct)
    b_n = w * s * (1.0 + ct) / u
    return AoiProgramCoefficients(a_n, b_n)


@dataclass(frozen=True)
class FixedPointSolution:
    x: float
    residual: float
    iterations: int
    utilization: UtilizationVector
    plan: FrequencyPlan


def solve_aoi_fixed_point(coeffs: AoiProgramCoefficients, s=None, max_iter: int = 200) -> FixedPointSolution:
    """Root x* < min a_n of sum_n sqrt(b_n / (a_n - x)) = 1.

    Works in the gap variable y = a - x > 0, where the residual
    g(y) = sum sqrt(b_n / (a_n - a + y)) - 1 is strictly decreasing, and
    bisects geometrically so that a root very close to a keeps full relative
    precision.  ``s`` (mean service times) converts utilizations to
    frequencies; without it the frequencies equal the utilizations.
    """
    a_n = np.asarray(coeffs.a_n, dtype=float)
    b_n = np.asarray(coeffs.b_n, dtype=float)
    if np.any(b_n <= 0):
        raise ValidationError("all b_n must be > 0")
    N = len(a_n)
    a = float(a_n.min())
    shift = a_n - a  # >= 0, exactly 0 for the minimising source(s)

    def g(y):
        return math.fsum(np.sqrt(b_n / (shift + y))) - 1.0

    y_lo = 1e-12 * max(1.0, abs(a))
    while g(y_lo) <= 0:
        # root sits below the default offset; keep shrinking towards a
        y_lo *= 1e-3
        if y_lo < 1e-300:
            raise InternalInvariantError("fixed point bracket collapsed onto a")
    y_hi = max(1.0, N * N * float(b_n.max()))
    doublings = 0
    while g(y_hi) >= 0:
        y_hi *= 2.0
        doublings += 1
        if doublings > 200:
            raise InternalInvariantError("fixed point bracket expansion failed after 200 doublings")

    it = 0
    while it < max_iter:
        mid = math.sqrt(y_lo * y_hi)
        if not (y_lo < mid < y_hi):
            break
        gm = g(mid)
        if gm == 0.0:
            y_lo = y_hi = mid
            break
        if gm > 0:
            y_lo = mid
        else:
            y_hi = mid
        it += 1
        if (y_hi - y_lo) <= 1e-15 * y_hi:
            break
    # pick the end with the smaller residual
    y = y_lo if abs(g(y_lo)) <= abs(g(y_hi)) else y_hi
    tau = np.sqrt(b_n / (shift + y))
    x = a - y
    res = g(y)
    if abs(tau.sum() - 1.0) > 1e-9:
        raise InternalInvariantError(f"utilizations sum to {tau.sum()!r} at the fixed point")
    tau_n = tau / tau.sum()
    f = frequencies_from_utilizations(tau_n, s) if s is not None else tau_n.copy()
    util = UtilizationVector(tau_n)
    return FixedPointSolution(x, res, it, util, FrequencyPlan(f, tau_n, "aoi_fixed_point"))


def kkt_residual(coeffs: AoiProgramCoefficients, tau) -> float:
    """Spread of a_n - b_n / tau_n^2 across sources, relative to its scale."""
    tau = np.asarray(tau, dtype=float)
    lam = coeffs.a_n - coeffs.b_n / (tau * tau)
    scale = max(1.0, float(np.max(np.abs(lam))))
    return float((lam.max() - lam.min()) / scale)


def aoi_frequencies(system: SystemSpec, c_tilde) -> FixedPointSolution:
    return solve_aoi_fixed_point(aoi_coefficients(system, c_tilde), s=system.s)
