"""Command-line interface: analyze, synthesize, simulate, benchmark, plotdata.

Exit codes: 0 success, 2 user/config error, 3 internal invariant violation.

Config files are JSON::

    {
      "system": {"sources": [{"weight": 2, "service": {"kind": "exponential", "mean": 10},
                              "drop_prob": 0.1}, ...]},
      "analyze":    {"pattern": "1,2,1,3"},
      "synthesize": {"method": "sams", "epsilons": "0:0.2:2", "iters": 3},
      "simulation": {"seed": 42, "target": 1000000, "warmup": 1000, "batches": 30,
                     "scheduler": {"pattern": "1,2"} | {"probabilities": [0.5, 0.5]}},
      "sweep":      {"source": 3, "field": "mean", "values": [0.5, 1, 2]},
      "benchmark":  {"policies": ["RR", "SAMS-3"], "spms_epsilon": 2}
    }

Command-line flags override the corresponding config entries.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import benchmark as bm
from .analysis import Pattern, PatternReport, evaluate_pattern
from .baselines import IsConfig, TransmissionProbabilities, insertion_search, pgaw_report, round_robin
from .errors import InternalInvariantError, ValidationError
from .model import SystemSpec, validate_system
from .simulator import SimConfig, agreement, simulate, write_paoi_samples
from .synthesis import SamsConfig, epsilon_grid, sams, spms

CONFIG_KEYS = {"system", "analyze", "synthesize", "simulation", "sweep", "benchmark", "output"}


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ValidationError("config must be a JSON object")
    if "sources" in cfg and "system" not in cfg:
        cfg = {"system": {"sources": cfg.pop("sources")}, **cfg}
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise ValidationError(f"unknown config block(s): {', '.join(sorted(unknown))}")
    if "system" not in cfg:
        raise ValidationError("config has no system block")
    return cfg


def _system(cfg) -> SystemSpec:
    return validate_system(cfg["system"])


def _dump_json(record: dict, path) -> None:
    text = json.dumps(record, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        return
    Path(path).write_text(text)


def _report_table(system: SystemSpec, rep: PatternReport) -> str:
    lines = [f"{'src':>4} {'w':>8} {'s~':>11} {'q~':>12} {'c~':>8} {'E[AoI]':>11} {'E[PAoI]':>11}"]
    for i in range(system.N):
        lines.append(f"{i + 1:>4} {system.w[i]:>8.4f} {rep.s_tilde[i]:>11.5g} {rep.q_tilde[i]:>12.5g} "
                     f"{rep.c_tilde[i]:>8.4f} {rep.aoi[i]:>11.6g} {rep.paoi[i]:>11.6g}")
    lines.append(f"system AoI  {rep.system_aoi:.10g}")
    lines.append(f"system PAoI {rep.system_paoi:.10g}")
    if abs(system.weight_scale - 1.0) > 1e-12:
        lines.append(f"(normalized weights; raw-weight values are x{system.weight_scale:g})")
    return "\n".join(lines)


def _read_pattern(args, block) -> Pattern:
    if getattr(args, "pattern", None):
        return Pattern.parse(args.pattern)
    if getattr(args, "pattern_file", None):
        try:
            text = Path(args.pattern_file).read_text().strip().splitlines()
        except OSError as exc:
            raise ValidationError(f"cannot read pattern file: {exc.strerror}") from None
        if not text:
            raise ValidationError("pattern file is empty")
        return Pattern.parse(text[0])
    if block and "pattern" in block:
        return Pattern.parse(str(block["pattern"]))
    raise ValidationError("no pattern given (use --pattern or --pattern-file)")


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    system = _system(cfg)
    pattern = _read_pattern(args, cfg.get("analyze"))
    rep = evaluate_pattern(pattern, system)
    print(f"pattern ({pattern.size} entries): {pattern.format()}")
    print(_report_table(system, rep))
    record = {"command": "analyze", "weight_scale": system.weight_scale, "report": rep.to_dict()}
    _dump_json(record, args.out)
    return 0


def cmd_synthesize(args) -> int:
    cfg = load_config(args.config)
    system = _system(cfg)
    block = cfg.get("synthesize", {}) or {}
    method = args.method or block.get("method")
    if method not in ("spms", "sams", "rr", "is"):
        raise ValidationError(f"method must be one of spms, sams, rr, is (got {method!r})")
    tie = args.tie_break or block.get("tie_break", "deterministic")
    rng = np.random.default_rng(args.seed) if tie == "random" else None
    extra: dict = {}
    targets = None
    if method == "spms":
        eps = args.epsilon if args.epsilon is not None else block.get("epsilon")
        if eps is None:
            raise ValidationError("spms needs --epsilon")
        res = spms(system, float(eps), tie_break=tie, rng=rng)
        pattern, rep, targets = res.pattern, res.report, res.plan.f
        extra = {"epsilon": float(eps)}
    elif method == "sams":
        eps_spec = args.epsilons or block.get("epsilons")
        iters = args.iters if args.iters is not None else block.get("iters")
        if eps_spec is None or iters is None:
            raise ValidationError("sams needs --epsilons and --iters")
        eps = epsilon_grid(eps_spec) if isinstance(eps_spec, str) else [float(e) for e in eps_spec]
        res = sams(system, SamsConfig(tuple(eps), int(iters), tie), rng=rng)
        pattern, rep = res.pattern, res.report
        extra = {"epsilons": list(eps), "iters": int(iters), "chosen_iteration": res.iteration,
                 "chosen_epsilon": res.epsilon,
                 "trace": [c.__dict__ for c in res.trace]}
    elif method == "rr":
        pattern = round_robin(system.N)
        rep = evaluate_pattern(pattern, system)
    else:
        size = args.max_size if args.max_size is not None else block.get("max_size")
        if size is None:
            raise ValidationError("is needs --max-size")
        res = insertion_search(system, IsConfig(int(size), bool(args.stop_early or block.get("stop_early"))))
        pattern, rep = res.pattern, res.report
        extra = {"max_size": int(size), "evaluations": res.evaluations}

    print(pattern.format())
    realized = pattern.counts(system.N) / pattern.size
    print(f"K = {pattern.size}")
    for i in range(system.N):
        tgt = "" if targets is None else f"  target {targets[i]:.6f}"
        print(f"  source {i + 1}: realized frequency {realized[i]:.6f}{tgt}")
    print(_report_table(system, rep))
    if args.out_pattern:
        Path(args.out_pattern).write_text(pattern.format() + "\n")
    record = {"command": "synthesize", "method": method, "pattern": pattern.format(),
              "realized_frequencies": realized.tolist(),
              "target_frequencies": None if targets is None else list(map(float, targets)),
              "weight_scale": system.weight_scale, "report": rep.to_dict(), **extra}
    _dump_json(record, args.out)
    return 0


def _sim_config(args, cfg) -> tuple[SimConfig, object]:
    block = cfg.get("simulation", {}) or {}
    sched_block = block.get("scheduler", {}) or {}
    scheduler = None
    if args.pattern:
        scheduler = Pattern.parse(args.pattern)
    elif args.probs:
        try:
            scheduler = TransmissionProbabilities([float(x) for x in args.probs.split(",")])
        except ValueError:
            raise ValidationError(f"bad probability list {args.probs!r}") from None
    elif "pattern" in sched_block:
        scheduler = Pattern.parse(str(sched_block["pattern"]))
    elif "probabilities" in sched_block:
        scheduler = TransmissionProbabilities(sched_block["probabilities"])
    if scheduler is None:
        raise ValidationError("no scheduler: give --pattern, --probs or simulation.scheduler")

    def pick(name, default):
        val = getattr(args, name)
        return val if val is not None else block.get(name, default)

    sc = SimConfig(target=int(pick("target", 1_000_000)), warmup=int(pick("warmup", 1000)),
                   seed=int(pick("seed", 0)), batches=int(pick("batches", 30)), scheduler=scheduler,
                   record_samples=bool(args.dump_samples))
    return sc, scheduler


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    system = _system(cfg)
    sc, scheduler = _sim_config(args, cfg)
    if isinstance(scheduler, TransmissionProbabilities):
        rep = pgaw_report(system, scheduler)
        sched_desc = {"probabilities": scheduler.r.tolist()}
    else:
        scheduler.check_feasible(system.N)
        rep = evaluate_pattern(scheduler, system)
        sched_desc = {"pattern": scheduler.format()}
    est = simulate(system, sc)
    agr = agreement(est, rep)
    print(f"{'src':>4} {'AoI est':>12} {'SE':>10} {'analytic':>12} {'z':>8} | "
          f"{'PAoI est':>12} {'SE':>10} {'analytic':>12} {'z':>8}")
    for i in range(system.N):
        print(f"{i + 1:>4} {est.aoi[i]:>12.6g} {est.aoi_se[i]:>10.3g} {rep.aoi[i]:>12.6g} {agr.z_aoi[i]:>8.3f} | "
              f"{est.paoi[i]:>12.6g} {est.paoi_se[i]:>10.3g} {rep.paoi[i]:>12.6g} {agr.z_paoi[i]:>8.3f}")
    print(f"system AoI  {est.system_aoi:.8g} +- {est.system_aoi_se:.3g} (analytic {rep.system_aoi:.8g})")
    print(f"system PAoI {est.system_paoi:.8g} +- {est.system_paoi_se:.3g} (analytic {rep.system_paoi:.8g})")
    flagged = int(agr.flags_aoi.sum() + agr.flags_paoi.sum())
    if flagged:
        print(f"{flagged} comparison(s) with |z| > {agr.threshold:g}")
    record = {"command": "simulate", "scheduler": sched_desc, "target": sc.target, "warmup": sc.warmup,
              "batches": sc.batches, "estimates": est.to_dict(), "analytic": rep.to_dict(),
              "z_aoi": agr.z_aoi.tolist(), "z_paoi": agr.z_paoi.tolist()}
    _dump_json(record, args.out)
    if args.dump_samples:
        write_paoi_samples(est, args.dump_samples)
    return 0


def cmd_benchmark(args) -> int:
    if bool(args.preset) == bool(args.config):
        raise ValidationError("give exactly one of --preset or --config")
    if args.preset:
        if args.preset == "fig4":
            bench = bm.fig4_preset(seed=args.seed, instances=args.instances, with_is=args.with_is)
        else:
            bench = bm.PRESETS[args.preset]()
    else:
        bench = bm.custom_benchmark(load_config(args.config))
    rows = bm.run_benchmark(bench, workers=args.workers, timing=not args.no_timing)
    if args.out in (None, "-"):
        bm.write_rows(rows, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            bm.write_rows(rows, fh)
        print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_plotdata(args) -> int:
    try:
        with open(args.csv, newline="") as fh:
            rows = bm.read_rows(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {args.csv}: {exc.strerror}") from None
    tidy = bm.plotdata(rows, args.metric)
    if args.out in (None, "-"):
        bm.write_plotdata(tidy, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            bm.write_plotdata(tidy, fh)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aoisched", description="Cyclic AoI/PAoI scheduler toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="mean AoI/PAoI of a cyclic pattern")
    a.add_argument("config")
    a.add_argument("--pattern")
    a.add_argument("--pattern-file")
    a.add_argument("--out", help="write JSON record here")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("synthesize", help="build a pattern with SPMS, SAMS, RR or IS")
    s.add_argument("config")
    s.add_argument("--method", choices=("spms", "sams", "rr", "is"))
    s.add_argument("--epsilon", type=float)
    s.add_argument("--epsilons", help="start:step:stop or comma list")
    s.add_argument("--iters", type=int)
    s.add_argument("--max-size", type=int)
    s.add_argument("--stop-early", action="store_true")
    s.add_argument("--tie-break", choices=("deterministic", "random"))
    s.add_argument("--seed", type=int, default=0, help="seed for random tie-breaking")
    s.add_argument("--out-pattern")
    s.add_argument("--out")
    s.set_defaults(func=cmd_synthesize)

    m = sub.add_parser("simulate", help="Monte Carlo estimates and agreement with the analysis")
    m.add_argument("config")
    m.add_argument("--pattern")
    m.add_argument("--probs", help="comma-separated transmission probabilities")
    m.add_argument("--seed", type=int)
    m.add_argument("--target", type=int)
    m.add_argument("--warmup", type=int)
    m.add_argument("--batches", type=int)
    m.add_argument("--dump-samples", help="CSV path for raw PAoI samples")
    m.add_argument("--out")
    m.set_defaults(func=cmd_simulate)

    b = sub.add_parser("benchmark", help="policy comparison over a preset or custom sweep")
    b.add_argument("--preset", choices=sorted(bm.PRESETS))
    b.add_argument("--config")
    b.add_argument("--out")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--seed", type=int, default=2024, help="fig4 instance seed")
    b.add_argument("--instances", type=int, default=bm.FIG4_INSTANCES)
    b.add_argument("--with-is", action="store_true", help="include insertion search in fig4")
    b.add_argument("--no-timing", action="store_true", help="leave wall_time empty (byte-stable output)")
    b.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("plotdata", help="reshape a benchmark CSV to tidy (x, series, y)")
    p.add_argument("csv")
    p.add_argument("--metric", choices=("aoi", "paoi"), default="aoi")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plotdata)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InternalInvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
