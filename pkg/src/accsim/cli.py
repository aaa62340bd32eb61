"""Command line entry point: simulate, analyze, sweep, bode."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import io, metrics
from .core import LinearPlannerParams, Scenario, ScenarioError, scenario_from_dict
from .sim import SimulationError, run_platoon


def _with_seed(s: Scenario, seed: int | None) -> Scenario:
    if seed is None:
        return s
    return dataclasses.replace(s, noise=dataclasses.replace(s.noise, seed=seed))


def _linear_params(meta: dict) -> tuple[float | None, float | None]:
    """Constant k_v/H_t shared by all followers, if the metadata has them."""
    vehicles = meta.get("scenario", {}).get("vehicles", [])
    pairs = {
        (v["planner"].get("k_v"), v["planner"].get("H_t"))
        for v in vehicles if v.get("planner", {}).get("kind") == "linear"
    }
    if len(pairs) == 1:
        k_v, H_t = pairs.pop()
        if isinstance(k_v, (int, float)):
            return float(k_v), float(H_t)
    return None, None


def cmd_simulate(args) -> int:
    s = _with_seed(io.load_scenario(args.scenario), args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        trace = run_platoon(s)
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return 2
    io.write_trace_csv(trace, out / "trace.csv")
    io.meta_path(out / "trace.csv").write_text(json.dumps(io.trace_meta(trace, s), indent=2) + "\n")
    if args.svg:
        names = [f"v{i}" for i in range(trace.n_vehicles)]
        io.write_svg(out / "speed.svg", trace.t, dict(zip(names, trace["v"].T)), s.name or "speed", "v [m/s]")
        gaps = {f"gap{i}": trace.spacing(i) for i in range(1, trace.n_vehicles)}
        io.write_svg(out / "spacing.svg", trace.t, gaps, "spacing", "gap [m]")
    if trace.collision:
        c = trace.collision
        print(f"collision: vehicle {c['vehicle']} at t={c['time']:.2f} s", file=sys.stderr)
        return 1
    print(f"wrote {out / 'trace.csv'} ({trace.n_ticks} ticks, {trace.n_vehicles} vehicles)")
    return 0


def cmd_analyze(args) -> int:
    trace, meta = io.read_trace_csv(args.trace, plan_dt=args.plan_dt, horizon_dt=args.horizon_dt)
    k_v, H_t = args.kv, args.ht
    if k_v is None or H_t is None:
        mk, mh = _linear_params(meta)
        k_v = mk if k_v is None else k_v
        H_t = mh if H_t is None else H_t
    report = metrics.analyze(trace, args.planner, event_time=args.event_time, k_v=k_v, H_t=H_t)
    text = json.dumps(report, indent=2, default=float) + "\n"
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    return 1 if trace.collision else 0


def _parse_values(raw: list[str]) -> list:
    values = []
    for item in raw:
        for tok in item.split(","):
            tok = tok.strip()
            if not tok:
                continue
            try:
                values.append(json.loads(tok))
            except json.JSONDecodeError:
                values.append(tok)
    return values


def cmd_sweep(args) -> int:
    base = _with_seed(io.load_scenario(args.scenario), args.seed)
    rows = io.run_sweep(base, args.param, _parse_values(args.values), jobs=args.jobs)
    if args.out:
        io.write_summary_csv(rows, args.out)
    else:
        io.write_summary_csv(rows, sys.stdout)
    return 0 if all(r["status"] == "ok" for r in rows) else 1


def cmd_bode(args) -> int:
    omega = metrics.omega_grid(args.omega_min, args.omega_max, args.points)
    gain = metrics.transfer_gain(args.kv, args.ht, omega)
    sup, ok = metrics.hinf_check(args.kv, args.ht, omega)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega", "gain"])
        for o, g in zip(omega, gain):
            w.writerow([repr(float(o)), repr(float(g))])
    finally:
        if args.out:
            fh.close()
    verdict = "string stable" if ok else "string unstable"
    print(f"sup |H| = {sup:.9g} over [{args.omega_min:g}, {args.omega_max:g}] rad/s: {verdict}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="accsim", description="ACC platoon string-stability simulator")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a scenario and write trace.csv")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int)
    s.add_argument("--svg", action="store_true", help="also write speed/spacing plots")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="string-stability report for a trace")
    a.add_argument("--trace", required=True)
    a.add_argument("--planner", required=True, choices=("linear", "mpc"))
    a.add_argument("--report", help="write JSON here instead of stdout")
    a.add_argument("--event-time", type=float)
    a.add_argument("--plan-dt", type=float, help="override trace metadata")
    a.add_argument("--horizon-dt", type=float, help="override trace metadata")
    a.add_argument("--kv", type=float, help="linear planner gain for the bound and H-inf check")
    a.add_argument("--ht", type=float, help="time headway for the bound and H-inf check")
    a.set_defaults(func=cmd_analyze)

    w = sub.add_parser("sweep", help="vary one parameter and summarize each run")
    w.add_argument("--scenario", required=True)
    w.add_argument("--param", required=True, help="e.g. vehicles.*.actuator.resp_scale")
    w.add_argument("--values", required=True, nargs="+", help="comma or space separated")
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("--seed", type=int)
    w.add_argument("--out", help="summary CSV path (stdout if omitted)")
    w.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bode", help="gain of the linear spacing-error transfer function")
    b.add_argument("--kv", type=float, required=True)
    b.add_argument("--ht", type=float, required=True)
    b.add_argument("--omega-min", type=float, default=1e-3)
    b.add_argument("--omega-max", type=float, default=1e2)
    b.add_argument("--points", type=int, default=2000)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bode)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, io.ParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
