"""Scenario files, trace CSVs, external lead traces, sweeps and SVG output."""
from __future__ import annotations

import csv
import json
import math
import re
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .core import (
    LinearPlannerParams,
    Scenario,
    ScenarioError,
    TableProfile,
    scenario_from_dict,
    scenario_to_dict,
)
from .sim import TRACE_FIELDS, PlatoonTrace, SimulationError, run_platoon

TRACE_COLUMNS = ("t", "vehicle_id") + TRACE_FIELDS
SUMMARY_COLUMNS = (
    "value", "status", "collision_time", "platoon_amplification",
    "last_pair_amplification", "I_last", "I_max", "error",
)


class ParseError(ValueError):
    def __init__(self, path, line: int, column: int, message: str):
        self.line, self.column = line, column
        super().__init__(f"{path}:{line}:{column}: {message}")


# -- scenarios ---------------------------------------------------------------


def load_scenario(path) -> Scenario:
    """Parse, resolve external lead traces, and validate a JSON scenario."""
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.colno, exc.msg) from None
    if not isinstance(data, dict):
        raise ParseError(path, 1, 1, "top level must be a JSON object")
    prof = data.get("lead_profile")
    if isinstance(prof, dict) and prof.get("kind") == "external":
        extra = set(prof) - {"kind", "path"}
        if extra:
            raise ScenarioError(f"lead_profile.{sorted(extra)[0]}", "unknown key")
        if "path" not in prof:
            raise ScenarioError("lead_profile.path", "external profile needs a CSV path")
        csv_path = Path(prof["path"])
        if not csv_path.is_absolute():
            csv_path = path.parent / csv_path
        table = ingest_external_trace(csv_path)
        data = dict(data)
        data["lead_profile"] = {
            "kind": "table", "t": list(table.t), "v": list(table.v), "source": str(prof["path"]),
        }
    return scenario_from_dict(data)


def save_scenario(s: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n")


def ingest_external_trace(path) -> TableProfile:
    """Read a recorded lead drive (CSV with header ``t,v``) as a lead profile."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["t", "v"]:
            raise ScenarioError(str(path), "expected a header row 't,v'")
        ts, vs = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                t, v = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                raise ScenarioError(f"{path}:{lineno}", f"bad row {row!r}") from None
            if not (math.isfinite(t) and math.isfinite(v)):
                raise ScenarioError(f"{path}:{lineno}", "non-finite value")
            if v < 0:
                raise ScenarioError(f"{path}:{lineno}", f"negative speed {v}")
            if ts and t <= ts[-1]:
                raise ScenarioError(f"{path}:{lineno}", "time stamps must be strictly increasing")
            ts.append(t)
            vs.append(v)
    if not ts:
        raise ScenarioError(str(path), "no data rows")
    return TableProfile(t=tuple(ts), v=tuple(vs), source=str(path))


# -- traces ------------------------------------------------------------------


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return ""
    return repr(float(x))


def write_trace_csv(trace: PlatoonTrace, path) -> None:
    """One row per (tick, vehicle); empty cells for quantities that do not apply."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        cols = [trace[name] for name in TRACE_FIELDS]
        for k, t in enumerate(trace.t):
            for veh in range(trace.n_vehicles):
                w.writerow([_fmt(t), veh] + [_fmt(c[k, veh]) for c in cols])


def trace_meta(trace: PlatoonTrace, scenario: Scenario | None = None) -> dict:
    meta: dict[str, Any] = {
        "plan_dt": trace.plan_dt,
        "control_dt": trace.control_dt,
        "horizon_dt": trace.horizon_dt,
        "planner_kinds": list(trace.planner_kinds),
        "collision": trace.collision,
        "solver_max_iterations": int(trace.solver_iterations.max()) if trace.solver_iterations is not None else 0,
        "solver_all_converged": bool(trace.solver_converged.all()) if trace.solver_converged is not None else True,
        "solver_all_monotone": bool(trace.solver_monotone.all()) if trace.solver_monotone is not None else True,
    }
    if scenario is not None:
        meta["scenario"] = scenario_to_dict(scenario)
    return meta


def meta_path(trace_path) -> Path:
    p = Path(trace_path)
    return p.with_name(p.stem + ".meta.json")


def read_trace_csv(
    path, plan_dt: float | None = None, horizon_dt: float | None = None
) -> tuple[PlatoonTrace, dict]:
    """Load a trace CSV; timing comes from the sidecar metadata when present."""
    path = Path(path)
    meta: dict = {}
    mp = meta_path(path)
    if mp.exists():
        meta = json.loads(mp.read_text())
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_COLUMNS:
            raise ValueError(f"{path}: header must be {','.join(TRACE_COLUMNS)}")
        rows = [r for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    n_veh = max(int(r[1]) for r in rows) + 1
    if len(rows) % n_veh:
        raise ValueError(f"{path}: ragged trace, {len(rows)} rows for {n_veh} vehicles")
    n_ticks = len(rows) // n_veh
    arr = np.array([[float(c) if c != "" else np.nan for c in r] for r in rows])
    arr = arr.reshape(n_ticks, n_veh, len(TRACE_COLUMNS))
    t = arr[:, 0, 0]
    data = {name: arr[:, :, 2 + i].copy() for i, name in enumerate(TRACE_FIELDS)}
    control_dt = meta.get("control_dt") or (float(t[1] - t[0]) if n_ticks > 1 else 0.01)
    trace = PlatoonTrace(
        t=t,
        data=data,
        plan_dt=plan_dt or meta.get("plan_dt", 0.05),
        control_dt=control_dt,
        horizon_dt=horizon_dt or meta.get("horizon_dt", 0.2),
        planner_kinds=tuple(meta.get("planner_kinds", ())),
        collision=meta.get("collision"),
    )
    return trace, meta


# -- sweeps ------------------------------------------------------------------

_INDEX = re.compile(r"^(\w+)\[(\d+|\*)\]$")


def _split_path(path: str) -> list[str]:
    parts: list[str] = []
    for part in path.split("."):
        m = _INDEX.match(part)
        if m:
            parts.extend([m.group(1), m.group(2)])
        elif part:
            parts.append(part)
        else:
            raise ValueError(f"invalid parameter path {path!r}")
    return parts


def set_param(base: Scenario, path: str, value: Any) -> Scenario:
    """Copy of ``base`` with the field at ``path`` replaced.

    Paths are dotted; list elements are addressed by index
    (``vehicles.0.controller.kp`` or ``vehicles[0].controller.kp``) or
    all at once with ``*``.
    """
    parts = _split_path(path)
    data = scenario_to_dict(base)
    _assign(data, parts, value, path)
    return scenario_from_dict(data)


def _assign(node: Any, parts: list[str], value: Any, full: str) -> None:
    key, rest = parts[0], parts[1:]
    if isinstance(node, list):
        if key == "*":
            targets = range(len(node))
        elif key.isdigit() and int(key) < len(node):
            targets = [int(key)]
        else:
            raise ValueError(f"invalid parameter path {full!r}: bad index {key!r}")
        for i in targets:
            if rest:
                _assign(node[i], rest, value, full)
            else:
                node[i] = value
        return
    if not isinstance(node, dict) or key not in node:
        raise ValueError(f"invalid parameter path {full!r}: no field {key!r}")
    if rest:
        _assign(node[key], rest, value, full)
    else:
        old = node[key]
        if isinstance(old, list) or (isinstance(old, dict) and "bp" not in old):
            raise ValueError(f"invalid parameter path {full!r}: {key!r} is not a scalar field")
        node[key] = value


def summarize_run(scenario: Scenario, trace: PlatoonTrace) -> dict:
    from . import metrics as M

    row: dict[str, Any] = {name: "" for name in SUMMARY_COLUMNS}
    if trace.collision:
        row["status"] = "collision"
        row["collision_time"] = trace.collision["time"]
    else:
        row["status"] = "ok"
    ev = M.detect_event_time(trace)
    if ev is None:
        return row
    last = trace.n_vehicles - 1
    linear = isinstance(scenario.vehicles[-1].planner, LinearPlannerParams)
    jw = M.joint_window(trace, 0, last, ev)
    w = M.detect_response_window(trace, last, ev)
    try:
        if jw is not None:
            row["platoon_amplification"] = M.amplification_ratio(trace, 0, last, jw)
        if w is not None:
            row["last_pair_amplification"] = M.amplification_ratio(trace, last - 1, last, w)
    except M.UndefinedIndexError as exc:
        row["error"] = str(exc)
    idx = []
    for veh in range(1, trace.n_vehicles):
        wv = M.detect_response_window(trace, veh, ev)
        if wv is None:
            continue
        try:
            fn = M.linear_ss_index if linear else M.mpc_ss_index
            idx.append((veh, fn(trace, veh, wv)))
        except M.UndefinedIndexError:
            pass
    if idx:
        row["I_max"] = max(v for _, v in idx)
        if idx[-1][0] == last:
            row["I_last"] = idx[-1][1]
    return row


def _sweep_one(args) -> dict:
    base, path, value = args
    try:
        s = set_param(base, path, value)
        trace = run_platoon(s)
        row = summarize_run(s, trace)
    except (ScenarioError, SimulationError, ValueError) as exc:
        row = {name: "" for name in SUMMARY_COLUMNS}
        row["status"] = "error"
        row["error"] = str(exc)
    row["value"] = value
    return row


def run_sweep(base: Scenario, path: str, values: Iterable, jobs: int = 1) -> list[dict]:
    """Simulate and summarize ``base`` once per value of the field at ``path``.

    The path is checked up front; a failing individual run is recorded
    with status ``error`` and the sweep carries on.
    """
    values = list(values)
    if not values:
        return []
    set_param(base, path, values[0])  # fail fast on a bad path
    tasks = [(base, path, v) for v in values]
    if jobs <= 1:
        return [_sweep_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_one, tasks))


def write_summary_csv(rows: list[dict], path_or_file) -> None:
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([_cell(row.get(c, "")) for c in SUMMARY_COLUMNS])

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with Path(path_or_file).open("w", newline="") as fh:
            emit(fh)


def _cell(x: Any) -> str:
    if isinstance(x, float):
        return _fmt(x)
    return "" if x is None else str(x)


# -- plots -------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


def write_svg(
    path, t: np.ndarray, series: dict[str, np.ndarray], title: str = "", ylabel: str = "",
    width: int = 720, height: int = 360,
) -> None:
    """Minimal line chart; enough to eyeball a speed or spacing trace."""
    left, right, top, bottom = 60, 120, 30, 40
    pw, ph = width - left - right, height - top - bottom
    t = np.asarray(t, dtype=float)
    ys = [np.asarray(y, dtype=float) for y in series.values()]
    finite = np.concatenate([y[np.isfinite(y)] for y in ys]) if ys else np.array([0.0])
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    t0, t1 = float(t[0]), float(t[-1]) if t[-1] > t[0] else float(t[0]) + 1.0

    def px(tv, yv):
        return left + (tv - t0) / (t1 - t0) * pw, top + (hi - yv) / (hi - lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>',
        f'<text x="{left}" y="18" font-size="14">{title}</text>',
        f'<text x="{left - 50}" y="{top + 12}" font-size="11">{hi:.3g}</text>',
        f'<text x="{left - 50}" y="{top + ph}" font-size="11">{lo:.3g}</text>',
        f'<text x="{left}" y="{height - 10}" font-size="11">t = {t0:.3g} s</text>',
        f'<text x="{left + pw - 60}" y="{height - 10}" font-size="11">{t1:.3g} s</text>',
        f'<text x="{left + pw / 2 - 20}" y="{height - 10}" font-size="11">{ylabel}</text>',
    ]
    step = max(1, len(t) // 2000)
    for n, (name, y) in enumerate(zip(series, ys)):
        color = _PALETTE[n % len(_PALETTE)]
        pts = " ".join(
            f"{x:.1f},{yy:.1f}"
            for x, yy in (px(tv, yv) for tv, yv in zip(t[::step], y[::step]) if np.isfinite(yv))
        )
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        out.append(
            f'<text x="{left + pw + 10}" y="{top + 14 * (n + 1)}" font-size="11" fill="{color}">{name}</text>'
        )
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
