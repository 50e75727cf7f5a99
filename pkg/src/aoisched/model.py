"""Source population description and service-time moments.

Sources are 1-indexed in every user-facing surface (patterns, reports, CLI)
and 0-indexed in arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ValidationError

KINDS = ("deterministic", "exponential", "gamma")


@dataclass(frozen=True)
class ServiceDistribution:
    kind: str
    mean: float
    scov: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown service kind {self.kind!r} (expected one of {KINDS})")
        if not (self.mean > 0) or not math.isfinite(self.mean):
            raise ValidationError("service mean must be > 0")
        if self.kind == "deterministic" and self.scov != 0.0:
            raise ValidationError("deterministic service must have scov 0")
        if self.kind == "exponential" and self.scov != 1.0:
            raise ValidationError("exponential service must have scov 1")
        if self.kind == "gamma" and not (self.scov > 0):
            raise ValidationError("gamma service needs scov > 0")

    @classmethod
    def deterministic(cls, mean: float) -> ServiceDistribution:
        return cls("deterministic", float(mean), 0.0)

    @classmethod
    def exponential(cls, mean: float) -> ServiceDistribution:
        return cls("exponential", float(mean), 1.0)

    @classmethod
    def gamma(cls, mean: float, scov: float) -> ServiceDistribution:
        return cls("gamma", float(mean), float(scov))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "mean": self.mean}
        if self.kind == "gamma":
            d["scov"] = self.scov
        return d


def service_moments(dist: ServiceDistribution) -> tuple[float, float, float]:
    """Return (mean, second moment, scov) of a service distribution."""
    m = dist.mean
    if dist.kind == "deterministic":
        return m, m * m, 0.0
    if dist.kind == "exponential":
        return m, 2.0 * m * m, 1.0
    c = dist.scov
    return m, m * m * (1.0 + c), c


@dataclass(frozen=True)
class SourceSpec:
    weight: float
    service: ServiceDistribution
    drop_prob: float = 0.0
    raw_weight: float | None = None

    @property
    def s(self) -> float:
        return self.service.mean

    @property
    def q(self) -> float:
        return service_moments(self.service)[1]

    @property
    def c(self) -> float:
        return service_moments(self.service)[2]

    @property
    def v(self) -> float:
        return self.c * self.s * self.s

    @property
    def u(self) -> float:
        return 1.0 - self.drop_prob

    def to_dict(self) -> dict:
        return {
            "weight": self.raw_weight if self.raw_weight is not None else self.weight,
            "service": self.service.to_dict(),
            "drop_prob": self.drop_prob,
        }


@dataclass(frozen=True)
class SystemSpec:
    """Validated system. Use :func:`validate_system` or :meth:`from_arrays` to build one.

    The array attributes (``w``, ``s``, ``q``, ``v``, ``c``, ``p``, ``u``) are
    read-only numpy views in source order.
    """

    sources: tuple[SourceSpec, ...]
    w: np.ndarray = field(init=False, repr=False, compare=False)
    s: np.ndarray = field(init=False, repr=False, compare=False)
    q: np.ndarray = field(init=False, repr=False, compare=False)
    v: np.ndarray = field(init=False, repr=False, compare=False)
    c: np.ndarray = field(init=False, repr=False, compare=False)
    p: np.ndarray = field(init=False, repr=False, compare=False)
    u: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        arrays = {
            "w": [src.weight for src in self.sources],
            "s": [src.s for src in self.sources],
            "q": [src.q for src in self.sources],
            "v": [src.v for src in self.sources],
            "c": [src.c for src in self.sources],
            "p": [src.drop_prob for src in self.sources],
            "u": [src.u for src in self.sources],
        }
        for name, vals in arrays.items():
            a = np.asarray(vals, dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def N(self) -> int:
        return len(self.sources)

    @property
    def raw_weights(self) -> np.ndarray:
        return np.array([src.raw_weight if src.raw_weight is not None else src.weight
                         for src in self.sources])

    @property
    def weight_scale(self) -> float:
        """Sum of raw weights; multiply a normalized system metric by this to get the raw-weight value."""
        return float(self.raw_weights.sum())

    @classmethod
    def from_arrays(cls, weights, means, drop_probs=None, kinds="deterministic", scovs=None) -> SystemSpec:
        n = len(weights)
        if isinstance(kinds, str):
            kinds = [kinds] * n
        if drop_probs is None:
            drop_probs = [0.0] * n
        if scovs is None:
            scovs = [None] * n
        raw = []
        for k in range(n):
            service: dict[str, Any] = {"kind": kinds[k], "mean": means[k]}
            if scovs[k] is not None:
                service["scov"] = scovs[k]
            raw.append({"weight": weights[k], "service": service, "drop_prob": drop_probs[k]})
        return validate_system({"sources": raw})

    def to_dict(self) -> dict:
        return {"sources": [src.to_dict() for src in self.sources]}

    def replace_source(self, index: int, **changes) -> SystemSpec:
        """Return a new validated system with fields of source ``index`` (1-based) changed.

        Accepted keys: weight, mean, scov, drop_prob, kind.
        """
        if not 1 <= index <= self.N:
            raise ValidationError(f"no source {index} (system has {self.N})")
        raw = self.to_dict()["sources"]
        entry = raw[index - 1]
        for key, val in changes.items():
            if key in ("weight", "drop_prob"):
                entry[key] = val
            elif key in ("mean", "scov", "kind"):
                entry["service"][key] = val
            else:
                raise ValidationError(f"unknown source field {key!r}")
        return validate_system({"sources": raw})


def _parse_service(raw, idx: int) -> ServiceDistribution:
    if isinstance(raw, ServiceDistribution):
        return raw
    if not isinstance(raw, Mapping):
        raise ValidationError(f"source {idx}: service must be an object with kind and mean")
    kind = raw.get("kind", "deterministic")
    if "mean" not in raw:
        raise ValidationError(f"source {idx}: service mean missing")
    mean = _as_float(raw["mean"], f"source {idx}: service mean")
    if kind == "exponential":
        scov = 1.0
    elif kind == "deterministic":
        scov = 0.0
    else:
        scov = raw.get("scov")
        if scov is None:
            raise ValidationError(f"source {idx}: gamma service needs scov")
        scov = _as_float(scov, f"source {idx}: scov")
    if "scov" in raw and kind in ("deterministic", "exponential"):
        given = _as_float(raw["scov"], f"source {idx}: scov")
        if given != scov:
            raise ValidationError(f"source {idx}: {kind} service has scov {scov:g}, got {given:g}")
    if scov < 0:
        raise ValidationError(f"source {idx}: scov must be >= 0")
    try:
        return ServiceDistribution(kind, mean, scov)
    except ValidationError as exc:
        raise ValidationError(f"source {idx}: {exc}") from None


def _as_float(x, what: str) -> float:
    try:
        val = float(x)
    except (TypeError, ValueError):
        raise ValidationError(f"{what} must be a number, got {x!r}") from None
    if not math.isfinite(val):
        raise ValidationError(f"{what} must be finite")
    return val


def validate_system(raw) -> SystemSpec:
    """Validate a raw system description and normalize its weights.

    ``raw`` is either a :class:`SystemSpec` (returned unchanged) or a mapping
    with a ``sources`` list; each entry carries ``weight``, ``service``
    (``{"kind", "mean", "scov"}``) and ``drop_prob``.
    """
    if isinstance(raw, SystemSpec):
        return raw
    if isinstance(raw, Mapping):
        entries = raw.get("sources")
    else:
        entries = raw
    if not entries:
        raise ValidationError("system needs at least one source")
    if not isinstance(entries, Sequence):
        raise ValidationError("sources must be a list")

    weights, services, drops = [], [], []
    for idx, entry in enumerate(entries, start=1):
        if isinstance(entry, SourceSpec):
            entry = {"weight": entry.raw_weight if entry.raw_weight is not None else entry.weight,
                     "service": entry.service, "drop_prob": entry.drop_prob}
        if not isinstance(entry, Mapping):
            raise ValidationError(f"source {idx}: expected an object")
        if "weight" not in entry:
            raise ValidationError(f"source {idx}: weight missing")
        w = _as_float(entry["weight"], f"source {idx}: weight")
        if w <= 0:
            raise ValidationError(f"source {idx}: weight must be > 0")
        if "service" not in entry:
            raise ValidationError(f"source {idx}: service missing")
        svc = _parse_service(entry["service"], idx)
        p = _as_float(entry.get("drop_prob", 0.0), f"source {idx}: drop_prob")
        if p < 0:
            raise ValidationError(f"source {idx}: drop probability must be >= 0")
        if p >= 1:
            raise ValidationError(f"source {idx}: drop probability must be < 1")
        weights.append(w)
        services.append(svc)
        drops.append(p)

    total = math.fsum(weights)
    sources = tuple(
        SourceSpec(weight=w / total, service=svc, drop_prob=p, raw_weight=w)
        for w, svc, p in zip(weights, services, drops)
    )
    return SystemSpec(sources)
