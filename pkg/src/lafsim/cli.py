"""Command-line interface.

Subcommands:
  run           simulate one scenario (one or more seeds) and write reports
  sweep         cross-product of demand factor x left-turn ratio x headway
  export-model  write one optimization instant as an LP or MPS file
  verify        check a plans file for safety violations
  report        print the summary of a finished run directory
  solve-lp      solve an LP file and write a solution file

Exit codes: 0 success, 1 bad usage or configuration, 2 runtime or solver
failure (including safety violations).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import statistics
import sys
from dataclasses import replace
from pathlib import Path

from .builder import Snapshot, VehicleSnapshot
from .geometry import GeometryError, default_intersection, load_geometry
from .metrics import compute_metrics, write_report
from .plan import TrajectoryPlan
from .scenario import (ScenarioError, default_scenario, generate_arrivals,
                       load_scenario, with_left_turn_ratio)
from .simulation import run_simulation
from .verify import VerifyParams, verify

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):        # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_seeds(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",")]


def _load_config(args):
    if getattr(args, "scenario", None):
        cfg = load_scenario(args.scenario)
    else:
        cfg = default_scenario()
    overrides = {}
    for attr in ("demand_factor", "mode", "time_limit", "seed"):
        val = getattr(args, attr, None)
        if val is not None:
            overrides[attr] = val
    if getattr(args, "duration", None) is not None:
        overrides["sim_duration"] = args.duration
    return replace(cfg, **overrides) if overrides else cfg


def _verify_params(cfg):
    return VerifyParams(
        tau=cfg.tau, d_gap=cfg.d_gap, T_turn=cfg.T_turn,
        exit_lanes={a: tuple(cfg.exit_lanes(a)) for a in cfg.geometry.arms},
        approach_lanes={a: tuple(cfg.approach_lanes(a))
                        for a in cfg.geometry.arms})


def _write_plans(result, path: Path):
    cfg = result.config
    doc = {
        "params": {"tau": cfg.tau, "d_gap": cfg.d_gap, "T_turn": cfg.T_turn,
                   "mode": cfg.mode,
                   "exit_lanes": {str(a): list(cfg.exit_lanes(a))
                                  for a in cfg.geometry.arms}},
        "plans": [p.to_dict() for p in result.plans.values()],
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def _single_run(cfg, outdir: Path, plots: bool) -> tuple[dict, bool]:
    """Run one seed, write its report; (summary row, failed flag)."""
    result = run_simulation(cfg)
    metrics = write_report(result, outdir, plots=plots)
    _write_plans(result, outdir / "plans.json")
    violations = verify(list(result.plans.values()), cfg.geometry,
                        _verify_params(cfg))
    with open(outdir / "violations.txt", "w") as f:
        for v in violations:
            f.write(str(v) + "\n")
    if result.failed_snapshot is not None:
        with open(outdir / "failed_snapshot.json", "w") as f:
            json.dump(result.failed_snapshot, f)
    row = {"seed": cfg.seed, "demand_factor": cfg.demand_factor,
           "tau": cfg.tau, "mode": cfg.mode,
           "finished": metrics.n_finished, "arrived": metrics.n_arrived,
           "mean_delay": round(metrics.mean_delay, 4),
           "max_delay": round(metrics.max_delay, 4),
           "throughput": round(metrics.throughput, 2),
           "violations": len(violations), "aborted": result.aborted}
    return row, result.aborted or bool(violations)


def _write_rows(rows: list[dict], path: Path):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        w.writeheader()
        w.writerows(rows)


def cmd_run(args) -> int:
    cfg = _load_config(args)
    seeds = _parse_seeds(args.seeds) if args.seeds else [cfg.seed]
    outdir = Path(args.out)
    rows = []
    failed = False
    for seed in seeds:
        run_cfg = replace(cfg, seed=seed)
        subdir = outdir / f"seed{seed}" if len(seeds) > 1 else outdir
        row, bad = _single_run(run_cfg, subdir, plots=not args.no_plots)
        failed |= bad
        rows.append(row)
        print(f"seed {seed}: finished {row['finished']}/{row['arrived']}, "
              f"mean delay {row['mean_delay']}s, "
              f"violations {row['violations']}")
    outdir.mkdir(parents=True, exist_ok=True)
    _write_rows(rows, outdir / "runs.csv")
    delays = [r["mean_delay"] for r in rows if not math.isnan(r["mean_delay"])]
    agg = {
        "seeds": seeds,
        "n_seeds": len(seeds),
        "mean_delay": round(statistics.fmean(delays), 4) if delays else None,
        "std_delay": round(statistics.stdev(delays), 4)
        if len(delays) > 1 else 0.0,
        "failed": failed,
    }
    with open(outdir / "aggregate.json", "w") as f:
        json.dump(agg, f, indent=2)
    if len(seeds) > 1:
        print(f"aggregate mean delay {agg['mean_delay']}s "
              f"(std {agg['std_delay']})")
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    sweep = dict(cfg.sweep)
    if args.factors:
        sweep["alpha"] = [float(x) for x in args.factors.split(",")]
    if not sweep:
        raise UsageError("no sweep axes: give --factors or a [sweep] section")
    alphas = sweep.get("alpha", [cfg.demand_factor])
    ratios = sweep.get("left_turn_ratio", [None])
    taus = sweep.get("tau", [cfg.tau])
    seeds = _parse_seeds(args.seeds)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    failed = False
    for alpha in alphas:
        for ratio in ratios:
            for tau in taus:
                cell = replace(cfg, demand_factor=alpha, tau=tau)
                if ratio is not None:
                    cell = with_left_turn_ratio(cell, ratio)
                delays = []
                cell_failed = False
                for seed in seeds:
                    run_cfg = replace(cell, seed=seed)
                    tag = (f"a{alpha:g}"
                           + (f"_lt{ratio:g}" if ratio is not None else "")
                           + f"_tau{tau:g}_s{seed}")
                    row, bad = _single_run(run_cfg, outdir / tag, plots=False)
                    cell_failed |= bad
                    if not math.isnan(row["mean_delay"]):
                        delays.append(row["mean_delay"])
                failed |= cell_failed
                rows.append({
                    "alpha": alpha,
                    "left_turn_ratio": ratio if ratio is not None else "",
                    "tau": tau, "mode": cfg.mode, "n_seeds": len(seeds),
                    "mean_delay": round(statistics.fmean(delays), 4)
                    if delays else "",
                    "std_delay": round(statistics.stdev(delays), 4)
                    if len(delays) > 1 else 0.0,
                    "failed": cell_failed,
                })
                print(f"alpha={alpha} ratio={ratio} tau={tau}: "
                      f"mean delay {rows[-1]['mean_delay']}s")
    _write_rows(rows, outdir / "sweep.csv")
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_export_model(args) -> int:
    from .builder import build_model
    from .lp_io import export_model
    if args.snapshot:
        geo = load_geometry(args.geometry) if args.geometry \
            else default_intersection()
        with open(args.snapshot) as f:
            snap = Snapshot.from_dict(json.load(f), geo)
    else:
        cfg = _load_config(args)
        arrivals = generate_arrivals(cfg)
        if not arrivals:
            raise UsageError("scenario has no arrivals to model")
        first = [a for a in arrivals if a.time <= arrivals[0].time + 1e-9]
        t0 = round(arrivals[0].time / cfg.dt + 0.5) * cfg.dt
        snap = Snapshot(
            geometry=cfg.geometry, t0=t0, dt=cfg.dt, T=cfg.T0, tau=cfg.tau,
            d_gap=cfg.d_gap, T_turn=cfg.T_turn, w1=cfg.w1, w2=cfg.w2,
            mode=cfg.mode,
            decision=[VehicleSnapshot(
                id=a.vehicle_id, a0=a.origin, a_out=a.destination,
                x_now=cfg.geometry.arms[a.origin].link_length,
                lane_now=a.entry_lane, dir_now=0, t_enter_link=0.0,
                arrival_time=a.time) for a in first],
            approach_lanes={m: tuple(cfg.approach_lanes(m))
                            for m in cfg.geometry.arms},
            exit_lanes={m: tuple(cfg.exit_lanes(m))
                        for m in cfg.geometry.arms})
    model, _ = build_model(snap)
    export_model(model, args.out, fmt=args.format)
    print(f"wrote {args.out}: {model.stats()}")
    return EXIT_OK


def cmd_verify(args) -> int:
    geo = load_geometry(args.geometry) if args.geometry \
        else default_intersection()
    with open(args.plans) as f:
        doc = json.load(f)
    p = doc["params"]
    params = VerifyParams(
        tau=p["tau"], d_gap=p["d_gap"], T_turn=p["T_turn"],
        exit_lanes={int(a): tuple(v) for a, v in p["exit_lanes"].items()})
    plans = [TrajectoryPlan.from_dict(d) for d in doc["plans"]]
    violations = verify(plans, geo, params)
    for v in violations:
        print(v)
    print(f"{len(plans)} plans, {len(violations)} violations")
    return EXIT_RUNTIME if violations else EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.rundir) / "summary.json"
    if not path.exists():
        raise UsageError(f"no summary.json in {args.rundir}")
    with open(path) as f:
        summary = json.load(f)
    width = max(len(k) for k in summary)
    for key, val in summary.items():
        if key == "per_od":
            continue
        print(f"{key:<{width}}  {val}")
    if summary.get("per_od"):
        print("\nper movement (origin-destination):")
        for od, stats in summary["per_od"].items():
            print(f"  {od}: {stats['count']} vehicles, "
                  f"mean delay {stats['mean_delay']}s")
    return EXIT_OK


def cmd_solve_lp(args) -> int:
    from .solver import solve_lp_file
    status = solve_lp_file(args.lp, args.sol, time_limit=args.time_limit)
    return EXIT_OK if status in ("optimal", "time_limit") else EXIT_RUNTIME


def _add_scenario_args(p, with_factor=True):
    p.add_argument("--scenario", help="scenario INI file (default demand "
                   "pattern if omitted)")
    p.add_argument("--mode", choices=["laf", "alaf"], default=None)
    p.add_argument("--duration", type=float, default=None,
                   help="demand duration in seconds")
    p.add_argument("--time-limit", dest="time_limit", type=float,
                   default=None, help="per-solve wall clock limit")
    if with_factor:
        p.add_argument("--demand-factor", dest="demand_factor", type=float,
                       default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="lafsim", description=__doc__,
                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True,
                            parser_class=_Parser)

    p = sub.add_parser("run", help="simulate one scenario")
    _add_scenario_args(p)
    p.add_argument("--seeds", default=None,
                   help="e.g. '1,2,3' or '1..5' (default: scenario seed)")
    p.add_argument("--out", default="run_out", help="report directory")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="sensitivity sweep")
    _add_scenario_args(p, with_factor=False)
    p.add_argument("--factors", default=None,
                   help="comma-separated demand factors (overrides [sweep] alpha)")
    p.add_argument("--seeds", default="1")
    p.add_argument("--out", default="sweep_out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-model", help="write an LP/MPS model file")
    _add_scenario_args(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--snapshot", help="optimization-instant JSON instead of "
                   "a scenario's first arrivals")
    p.add_argument("--geometry", help="geometry INI (with --snapshot)")
    p.add_argument("--format", choices=["lp", "mps"], default="lp")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_model)

    p = sub.add_parser("verify", help="check a plans.json for violations")
    p.add_argument("plans")
    p.add_argument("--geometry", help="geometry INI if not the default")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="print a run directory's summary")
    p.add_argument("rundir")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("solve-lp", help="solve an LP file")
    p.add_argument("lp")
    p.add_argument("sol")
    p.add_argument("time_limit", type=float, nargs="?", default=60.0)
    p.set_defaults(func=cmd_solve_lp)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ScenarioError, GeometryError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
