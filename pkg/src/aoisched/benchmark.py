"""Policy comparisons over parameter sweeps, and their CSV formats.

Presets: a three-source deterministic system swept over the third service time
(fig2), a lossy three-source system swept over the third weight (fig3),
100 unit-service sources with random weights and drop probabilities
(fig4) and an exponential-service PAoI comparison (fig5).

System metrics are always computed with normalized weights; the
``weight_scale`` column is the sum of the raw weights (multiply to
recover raw-weight values).
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .baselines import IsConfig, insertion_search, pgaw_star, round_robin
from .analysis import evaluate_pattern
from .errors import InternalInvariantError, ValidationError
from .model import SystemSpec, validate_system
from .synthesis import SAMS_1, SAMS_2, SAMS_3, sams, spms

CSV_VERSION = "aoisched-benchmark v1"
COLUMNS = ["preset", "x_name", "x", "policy", "system_aoi", "system_paoi", "K",
           "weight_scale", "seed", "wall_time", "error"]
POLICIES = ("RR", "P-GAW*", "SPMS", "SAMS-1", "SAMS-2", "SAMS-3", "IS")
SWEEP_FIELDS = ("weight", "mean", "scov", "drop_prob")

FIG4_SOURCES = 100
FIG4_INSTANCES = 20
FIG4_MAX_DROP = 0.9


@dataclass
class PolicyOptions:
    spms_epsilon: float = 2.0
    is_size: int | str = "sams3"      # int, or "sams3" for the SAMS-3 pattern size
    is_stop_early: bool = False
    pgaw_metric: str = "aoi"
    grid_resolution: float = 0.02


@dataclass
class SweepPoint:
    x: float
    system: SystemSpec | None     # None when the sweep value itself was invalid
    seed: int | None = None
    error: str = ""


@dataclass
class Benchmark:
    name: str
    x_name: str
    points: list[SweepPoint]
    policies: tuple[str, ...]
    options: PolicyOptions = field(default_factory=PolicyOptions)


def _three_source(weights, means, drops, kind):
    return SystemSpec.from_arrays(weights, means, drops, kinds=kind)


def fig2_preset(values=(0.5, 1.0, 2.0, 4.0, 8.0)) -> Benchmark:
    pts = [SweepPoint(float(s3), _three_source((25, 5, 1), (5, 2.5, s3), (0, 0, 0), "deterministic"))
           for s3 in values]
    return Benchmark("fig2", "s3", pts, ("RR", "P-GAW*", "SAMS-1", "SAMS-2", "SAMS-3", "IS"),
                     PolicyOptions(is_size="sams3"))


def fig3_preset(values=tuple(range(1, 11))) -> Benchmark:
    pts = [SweepPoint(float(w3), _three_source((2, 5, w3), (10, 1, 1), (0.1, 0.5, 0.95), "deterministic"))
           for w3 in values]
    return Benchmark("fig3", "w3", pts, ("RR", "P-GAW*", "SAMS-1", "SAMS-2", "SAMS-3", "IS"),
                     PolicyOptions(is_size=75))


def fig4_instance(seed: int, index: int, N: int = FIG4_SOURCES) -> SystemSpec:
    """Unit deterministic services, simplex-uniform weights, drops uniform on [0, 0.9]."""
    rng = np.random.default_rng([seed, index])
    w = rng.dirichlet(np.ones(N))
    p = rng.uniform(0.0, FIG4_MAX_DROP, N)
    return SystemSpec.from_arrays(w, np.ones(N), p)


def fig4_preset(seed: int = 2024, instances: int = FIG4_INSTANCES, with_is: bool = False) -> Benchmark:
    pts = [SweepPoint(float(i), fig4_instance(seed, i), seed) for i in range(instances)]
    policies = ("RR", "SPMS", "SAMS-1", "SAMS-2", "SAMS-3") + (("IS",) if with_is else ())
    return Benchmark("fig4", "instance", pts, policies, PolicyOptions(is_size=2 * FIG4_SOURCES))


def fig5_preset(values=tuple(range(1, 11))) -> Benchmark:
    pts = [SweepPoint(float(w3), _three_source((2, 5, w3), (10, 1, 1), (0.1, 0.5, 0.6), "exponential"))
           for w3 in values]
    return Benchmark("fig5", "w3", pts, ("P-GAW*", "SPMS"), PolicyOptions(spms_epsilon=2.0, pgaw_metric="paoi"))


PRESETS: dict[str, Callable[..., Benchmark]] = {
    "fig2": fig2_preset,
    "fig3": fig3_preset,
    "fig4": fig4_preset,
    "fig5": fig5_preset,
}


def custom_benchmark(config: dict) -> Benchmark:
    """Benchmark from a config with ``system``, ``sweep`` and optional ``benchmark`` blocks.

    ``sweep`` = {"source": n, "field": one of weight/mean/scov/drop_prob, "values": [...]}.
    """
    system = validate_system(config.get("system"))
    sweep = config.get("sweep")
    if not isinstance(sweep, dict):
        raise ValidationError("custom benchmark needs a sweep block")
    fld = sweep.get("field")
    if fld not in SWEEP_FIELDS:
        raise ValidationError(f"sweep field must be one of {SWEEP_FIELDS}, got {fld!r}")
    src = sweep.get("source")
    if not isinstance(src, int) or not 1 <= src <= system.N:
        raise ValidationError(f"sweep source must be an index in 1..{system.N}")
    values = sweep.get("values")
    if not isinstance(values, list) or not values:
        raise ValidationError("sweep values must be a non-empty list")
    if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in values):
        raise ValidationError("sweep values must be numbers")
    pts = []
    for x in values:
        try:
            pts.append(SweepPoint(float(x), system.replace_source(src, **{fld: x})))
        except ValidationError as exc:
            pts.append(SweepPoint(float(x), None, error=f"ValidationError: {exc}"))
    block = config.get("benchmark", {}) or {}
    policies = tuple(block.get("policies", ("RR", "SPMS", "SAMS-1", "SAMS-2", "SAMS-3")))
    for p in policies:
        if p not in POLICIES:
            raise ValidationError(f"unknown policy {p!r}; choose from {POLICIES}")
    opts = PolicyOptions()
    for key in ("spms_epsilon", "is_size", "is_stop_early", "pgaw_metric", "grid_resolution"):
        if key in block:
            setattr(opts, key, block[key])
    return Benchmark(block.get("name", "custom"), f"{fld}[{src}]", pts, policies, opts)


def run_policy(system: SystemSpec, policy: str, opts: PolicyOptions, cache: dict | None = None):
    """Return (system_aoi, system_paoi, K) for one policy on one system."""
    cache = {} if cache is None else cache
    if policy == "RR":
        rep = evaluate_pattern(round_robin(system.N), system)
    elif policy == "SPMS":
        rep = spms(system, opts.spms_epsilon).report
    elif policy in ("SAMS-1", "SAMS-2", "SAMS-3"):
        cfg = {"SAMS-1": SAMS_1, "SAMS-2": SAMS_2, "SAMS-3": SAMS_3}[policy]
        rep = sams(system, cfg).report
        cache[policy] = rep
    elif policy == "IS":
        size = opts.is_size
        if size == "sams3":
            if "SAMS-3" not in cache:
                cache["SAMS-3"] = sams(system, SAMS_3).report
            size = max(system.N, cache["SAMS-3"].K)
        rep = insertion_search(system, IsConfig(int(size), opts.is_stop_early)).report
    elif policy == "P-GAW*":
        rep = pgaw_star(system, opts.pgaw_metric, opts.grid_resolution).report
    else:
        raise ValidationError(f"unknown policy {policy!r}")
    return rep.system_aoi, rep.system_paoi, rep.K


def _run_point(args):
    name, x_name, point, policies, opts, timing = args
    rows = []
    cache: dict = {}
    for pol in policies:
        t0 = time.perf_counter()
        row = {"preset": name, "x_name": x_name, "x": point.x, "policy": pol,
               "system_aoi": "", "system_paoi": "", "K": "",
               "weight_scale": "" if point.system is None else point.system.weight_scale,
               "seed": "" if point.seed is None else point.seed, "wall_time": "", "error": point.error}
        if point.system is None:
            rows.append(row)
            continue
        try:
            aoi, paoi, K = run_policy(point.system, pol, opts, cache)
            row.update(system_aoi=aoi, system_paoi=paoi, K="" if K is None else K)
        except (ValidationError, InternalInvariantError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        if timing:
            row["wall_time"] = time.perf_counter() - t0
        rows.append(row)
    return rows


def run_benchmark(bench: Benchmark, workers: int = 1, timing: bool = True) -> list[dict]:
    jobs = [(bench.name, bench.x_name, pt, bench.policies, bench.options, timing) for pt in bench.points]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            chunks = list(ex.map(_run_point, jobs))
    else:
        chunks = [_run_point(j) for j in jobs]
    order = {p: i for i, p in enumerate(bench.policies)}
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r["x"], order[r["policy"]]))
    return rows


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(rows: list[dict], fh) -> None:
    fh.write(f"# {CSV_VERSION}; system metrics use normalized weights (raw = value * weight_scale)\n")
    wr = csv.writer(fh, lineterminator="\n")
    wr.writerow(COLUMNS)
    for r in rows:
        wr.writerow([_fmt(r[c]) for c in COLUMNS])


def read_rows(fh) -> list[dict]:
    lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ValidationError("empty benchmark CSV")
    if lines[0].startswith("#"):
        lines = lines[1:]
    if not lines:
        raise ValidationError("benchmark CSV has no header")
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    missing = [c for c in ("x", "policy", "system_aoi", "system_paoi") if c not in (reader.fieldnames or [])]
    if missing:
        raise ValidationError(f"benchmark CSV lacks columns {missing}")
    rows = list(reader)
    for i, r in enumerate(rows, start=1):
        try:
            float(r["x"])
            for c in ("system_aoi", "system_paoi"):
                if r[c] not in ("", None):
                    float(r[c])
        except (TypeError, ValueError):
            raise ValidationError(f"malformed benchmark CSV row {i}") from None
    return rows


def plotdata(rows: list[dict], metric: str = "aoi") -> list[dict]:
    """Tidy (x, series, y) rows, one per benchmark row; failed points keep an empty y."""
    if metric not in ("aoi", "paoi"):
        raise ValidationError("metric must be aoi or paoi")
    col = "system_aoi" if metric == "aoi" else "system_paoi"
    return [{"x": r["x"], "series": r["policy"], "y": r[col]} for r in rows]


def write_plotdata(rows: list[dict], fh) -> None:
    wr = csv.writer(fh, lineterminator="\n")
    wr.writerow(["x", "series", "y"])
    for r in rows:
        wr.writerow([r["x"], r["series"], r["y"]])


def summarize(rows: list[dict]) -> dict:
    """{x: {policy: system_aoi}} for rows without errors."""
    out: dict = {}
    for r in rows:
        if r.get("error"):
            continue
        val = r["system_aoi"]
        out.setdefault(float(r["x"]), {})[r["policy"]] = float(val) if val != "" else math.nan
    return out
