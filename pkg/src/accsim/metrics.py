"""String-stability measures over simulated or recorded traces.

Time-domain indices are evaluated on the plan-tick series. A response
window ``[T1, T1 + dT]`` runs from the first plan tick after an event at
which the follower's speed reference has moved faster than ``theta1``
until that movement reverses or stays below ``theta2`` for ``hold``
seconds. Changes over a window are measured from the plan tick just
before ``T1``, so the first step of the response is included.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sim import PlatoonTrace

DV_LEAD_FLOOR = 0.1


class UndefinedIndexError(ValueError):
    pass


@dataclass(frozen=True)
class ResponseWindow:
    T1: float
    dT: float

    @property
    def end(self) -> float:
        return self.T1 + self.dT

    def as_dict(self) -> dict:
        return {"T1": self.T1, "dT": self.dT, "end": self.end}


def reference_series(trace: PlatoonTrace, vehicle: int) -> tuple[np.ndarray, np.ndarray]:
    """Plan-tick speed reference: lead speed, ``v_target`` or ``v_start``."""
    if vehicle == 0:
        return trace.plan_series("v", 0)
    t, vt = trace.plan_series("v_target", vehicle)
    if np.all(np.isnan(vt)):
        # MPC follower: v_pid at a plan tick equals v_start
        return trace.plan_series("v_pid", vehicle)
    return t, vt


def detect_event_time(trace: PlatoonTrace, tol: float = 1e-9) -> float | None:
    v = trace["v"][:, 0]
    moved = np.nonzero(np.abs(v - v[0]) > tol)[0]
    if len(moved) == 0:
        return None
    return float(trace.t[max(moved[0] - 1, 0)])


def _detect(t, y, dt, event_time, theta1, theta2, hold) -> tuple[int, int] | None:
    """Plan-tick indices where ``y`` starts and stops its move after the event."""
    if len(t) < 2:
        return None
    rate = np.diff(y) / dt  # rate[i] spans t[i] -> t[i+1]
    start = None
    for i in range(len(rate)):
        if t[i] >= event_time - 1e-9 and abs(rate[i]) > theta1:
            start = i
            break
    if start is None:
        return None
    direction = np.sign(rate[start])
    onset = start + 1  # first tick at which the move shows
    n_hold = max(1, int(round(hold / dt)))
    end = len(t) - 1
    slow_run = 0
    for i in range(start + 1, len(rate)):
        r = direction * rate[i]
        if r < 0:
            end = i
            break
        slow_run = slow_run + 1 if r < theta2 else 0
        if slow_run >= n_hold:
            end = i - n_hold + 1
            break
    return onset, max(end, onset)


def detect_response_window(
    trace: PlatoonTrace,
    vehicle: int,
    event_time: float,
    theta1: float = 0.05,
    theta2: float = 0.02,
    hold: float = 0.5,
) -> ResponseWindow | None:
    t, y = reference_series(trace, vehicle)
    found = _detect(t, y, trace.plan_dt, event_time, theta1, theta2, hold)
    if found is None:
        return None
    i, j = found
    return ResponseWindow(T1=float(t[i]), dT=float(t[j] - t[i]))


def speed_response_end(
    trace: PlatoonTrace, vehicle: int, t_from: float,
    theta1: float = 0.05, theta2: float = 0.02, hold: float = 0.5,
) -> float | None:
    """When the vehicle's actual speed stops moving, for a move starting after ``t_from``."""
    t, y = trace.plan_series("v", vehicle)
    found = _detect(t, y, trace.plan_dt, t_from, theta1, theta2, hold)
    return None if found is None else float(t[found[1]])


def joint_window(
    trace: PlatoonTrace, upstream: int, downstream: int, event_time: float, **kw
) -> ResponseWindow | None:
    """Smallest window covering both vehicles' responses to the event."""
    wins = [detect_response_window(trace, v, event_time, **kw) for v in (upstream, downstream)]
    wins = [w for w in wins if w is not None]
    if not wins:
        return None
    start = min(w.T1 for w in wins)
    end = max(w.end for w in wins)
    return ResponseWindow(T1=start, dT=end - start)


def _span(trace: PlatoonTrace, window) -> np.ndarray:
    if isinstance(window, ResponseWindow):
        lo, hi = window.T1 - trace.plan_dt, window.end
    else:
        lo, hi = window
    eps = 1e-9
    return (trace.t >= lo - eps) & (trace.t <= hi + eps)


def extend_window(
    trace: PlatoonTrace, window: ResponseWindow, vehicles, **kw
) -> ResponseWindow:
    """Stretch ``window`` until every listed vehicle's speed has stopped moving."""
    end = window.end
    for v in vehicles:
        e = speed_response_end(trace, v, window.T1 - trace.plan_dt, **kw)
        if e is not None:
            end = max(end, e)
    return ResponseWindow(T1=window.T1, dT=end - window.T1)


def amplification_ratio(
    trace: PlatoonTrace, upstream: int, downstream: int, window, extend: bool = True
) -> float:
    """Downstream speed excursion over upstream speed excursion; < 1 is damped.

    A :class:`ResponseWindow` is first extended to cover both vehicles'
    speed responses; an explicit ``(t_start, t_end)`` pair is used as is.
    """
    if extend and isinstance(window, ResponseWindow):
        window = extend_window(trace, window, (upstream, downstream))
    m = _span(trace, window)
    up = trace["v"][m, upstream]
    down = trace["v"][m, downstream]
    up_range = float(np.ptp(up)) if len(up) else 0.0
    if up_range <= 0:
        raise UndefinedIndexError("upstream vehicle shows no speed excursion in the window")
    return float(np.ptp(down)) / up_range


def steady_amplitude_ratio(
    trace: PlatoonTrace, upstream: int, downstream: int, t_start: float
) -> float:
    """Peak-to-peak speed ratio after ``t_start``; for periodic lead motion."""
    m = trace.t >= t_start
    up = float(np.ptp(trace["v"][m, upstream]))
    if up <= 0:
        raise UndefinedIndexError("upstream vehicle shows no speed excursion after t_start")
    return float(np.ptp(trace["v"][m, downstream])) / up


def _plan_window_idx(trace: PlatoonTrace, window: ResponseWindow) -> tuple[int, int]:
    """Plan-tick indices of the baseline (the tick before ``T1``) and the end."""
    tp = trace.t[trace.plan_index]
    i = int(np.argmin(np.abs(tp - window.T1)))
    j = int(np.argmin(np.abs(tp - window.end)))
    return max(i - 1, 0), j


def _dv_lead(trace: PlatoonTrace, vehicle: int, i: int, j: int) -> float:
    _, vl = trace.plan_series("v", vehicle - 1)
    dv = vl[j] - vl[i]
    if abs(dv) < DV_LEAD_FLOOR:
        raise UndefinedIndexError(
            f"|dv_lead| = {abs(dv):.3g} m/s is below the {DV_LEAD_FLOOR} m/s floor"
        )
    return float(dv)


def linear_ss_index(trace: PlatoonTrace, vehicle: int, window: ResponseWindow) -> float:
    """``(|dv_target| - |dv_lead|) / |dv_lead|`` over the window; > 0 amplifies."""
    i, j = _plan_window_idx(trace, window)
    dv_lead = _dv_lead(trace, vehicle, i, j)
    _, vt = trace.plan_series("v_target", vehicle)
    dv_target = vt[j] - vt[i]
    return float((abs(dv_target) - abs(dv_lead)) / abs(dv_lead))


def linear_ss_bound(
    trace: PlatoonTrace, vehicle: int, window: ResponseWindow, k_v: float, H_t: float
) -> float:
    """``k_v*((|mean v_rel_target| + |mean e|)/|mean a_lead| - H_t)``, never below the index.

    ``v_rel_target = v_lead - v_target`` and ``e = v_target - v_ego`` are
    averaged uniformly over the control ticks that make up the spacing
    change across the window, so their sum times ``dT`` is exactly that
    change and the triangle inequality gives ``bound >= linear_ss_index``
    whenever the planner was neither clamped nor rate limited at the
    window ends.
    """
    i, j = _plan_window_idx(trace, window)
    dv_lead = _dv_lead(trace, vehicle, i, j)
    per = trace.steps_per_plan
    ticks = slice(i * per + 1, j * per + 1)
    vl = trace["v"][ticks, vehicle - 1]
    ve = trace["v"][ticks, vehicle]
    vt = trace["v_target"][ticks, vehicle]
    span = trace.plan_dt * (j - i)
    a_lead = dv_lead / span
    return float(k_v * ((abs(np.mean(vl - vt)) + abs(np.mean(vt - ve))) / abs(a_lead) - H_t))


def _start_terms(trace: PlatoonTrace, vehicle: int, window: ResponseWindow):
    i, j = _plan_window_idx(trace, window)
    _, at = trace.plan_series("a_target", vehicle)
    _, a_pid = trace.plan_series("a_pid", vehicle)
    if np.all(np.isnan(at)):
        raise UndefinedIndexError(f"vehicle {vehicle} has no a_target series (not an MPC follower)")
    r = trace.plan_dt / trace.horizon_dt
    return i, j, at, float(a_pid[0]), r


def delta_v_start(trace: PlatoonTrace, vehicle: int, window: ResponseWindow) -> float:
    """Change of ``v_start`` over the window rebuilt from the ``a_target`` record.

    Uses the non-recursive form of the ``a_start`` filter: after plan step
    ``n`` it equals ``(1-r)^(n+1) a_start(0) + sum_m r (1-r)^(n-m) a_target(m)``
    with ``r = plan_dt / horizon_dt``.
    """
    i, j, at, a0, r = _start_terms(trace, vehicle, window)
    total = 0.0
    for n in range(i, j):
        m = np.arange(n + 1)
        a_start = (1 - r) ** (n + 1) * a0 + np.sum(r * (1 - r) ** (n - m) * at[m])
        total += trace.plan_dt * (at[n] + a_start) / 2.0
    return float(total)


def mpc_ss_index(trace: PlatoonTrace, vehicle: int, window: ResponseWindow) -> float:
    """Index for target-acceleration planners; absolute values inside the sums.

    Equals ``|dv_start|/|dv_lead| - 1`` whenever the recorded ``a_target``
    keeps one sign, and bounds it from above otherwise.
    """
    i, j, at, a0, r = _start_terms(trace, vehicle, window)
    dv_lead = _dv_lead(trace, vehicle, i, j)
    abs_at = np.abs(at)
    direct = np.sum(abs_at[i:j])
    filtered = 0.0
    for n in range(i, j):
        m = np.arange(n + 1)
        filtered += abs((1 - r) ** (n + 1) * a0) + np.sum(r * (1 - r) ** (n - m) * abs_at[m])
    return float(-1.0 + trace.plan_dt / (2.0 * abs(dv_lead)) * (direct + filtered))


def transfer_gain(k_v: float, H_t: float, omega):
    """Magnitude of the ideal-tracking speed-to-speed transfer function."""
    omega = np.asarray(omega, dtype=float)
    num = ((1.0 - k_v * H_t) * omega) ** 2 + k_v**2
    den = omega**2 + k_v**2
    return np.sqrt(num / den)


def omega_grid(lo: float = 1e-3, hi: float = 1e2, points: int = 2000) -> np.ndarray:
    return np.logspace(np.log10(lo), np.log10(hi), points)


def hinf_check(k_v: float, H_t: float, omega=None) -> tuple[float, bool]:
    """Supremum of the transfer gain over the grid and whether it is <= 1."""
    omega = omega_grid() if omega is None else np.asarray(omega, dtype=float)
    sup = float(np.max(transfer_gain(k_v, H_t, omega)))
    return sup, sup <= 1.0 + 1e-9


def rms_jerk(trace: PlatoonTrace, vehicle: int, t_start: float = 0.0) -> float:
    m = trace.t >= t_start
    a = trace["a"][m, vehicle]
    jerk = np.diff(a) / trace.control_dt
    return float(np.sqrt(np.mean(jerk**2)))


def control_variance(trace: PlatoonTrace, vehicle: int, t_start: float) -> float:
    return float(np.var(trace["control"][trace.t >= t_start, vehicle]))


def overshoot(trace: PlatoonTrace, vehicle: int) -> float:
    """How far the vehicle's speed passes beyond the lead's final speed."""
    v_final = trace["v"][-1, 0]
    v0 = trace["v"][0, 0]
    v = trace["v"][:, vehicle]
    if v_final < v0:
        return float(max(v_final - v.min(), 0.0))
    return float(max(v.max() - v_final, 0.0))


def analyze(
    trace: PlatoonTrace,
    planner: str,
    event_time: float | None = None,
    k_v: float | None = None,
    H_t: float | None = None,
) -> dict:
    """JSON-ready report: windows, indices and amplification ratios per pair."""
    if planner not in ("linear", "mpc"):
        raise ValueError(f"planner must be 'linear' or 'mpc', not {planner!r}")
    if event_time is None:
        event_time = detect_event_time(trace)
    report: dict = {
        "planner": planner,
        "event_time": event_time,
        "collision": trace.collision,
        "vehicles": [],
    }
    if event_time is None:
        report["note"] = "lead speed never changes; no response window"
        return report
    last = trace.n_vehicles - 1
    for veh in range(1, trace.n_vehicles):
        entry: dict = {"vehicle": veh}
        w = detect_response_window(trace, veh, event_time)
        entry["window"] = None if w is None else w.as_dict()
        if w is not None:
            entry.update(_indices(trace, veh, w, planner, k_v, H_t))
            try:
                entry["amplification"] = amplification_ratio(trace, veh - 1, veh, w)
            except UndefinedIndexError as exc:
                entry["amplification_error"] = str(exc)
        report["vehicles"].append(entry)
    jw = joint_window(trace, 0, last, event_time)
    if jw is not None:
        report["platoon_window"] = jw.as_dict()
        try:
            report["platoon_amplification"] = amplification_ratio(trace, 0, last, jw)
        except UndefinedIndexError as exc:
            report["platoon_amplification_error"] = str(exc)
    if planner == "linear" and k_v is not None and H_t is not None:
        sup, ok = hinf_check(k_v, H_t)
        report["hinf"] = {"k_v": k_v, "H_t": H_t, "sup_gain": sup, "string_stable": ok}
    return report


def _indices(trace, veh, w, planner, k_v, H_t) -> dict:
    out: dict = {}
    try:
        if planner == "linear":
            out["I_linear"] = linear_ss_index(trace, veh, w)
            if k_v is not None and H_t is not None:
                out["I_linear_bound"] = linear_ss_bound(trace, veh, w, k_v, H_t)
        else:
            out["I_mpc"] = mpc_ss_index(trace, veh, w)
            out["dv_start"] = delta_v_start(trace, veh, w)
    except UndefinedIndexError as exc:
        out["index_error"] = str(exc)
    return out
