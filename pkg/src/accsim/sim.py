"""Deterministic two-rate platoon simulation.

Vehicle 0 is the scripted lead; vehicles ``1..N`` are followers, each
following its predecessor. Every control tick all vehicles compute their
commands from the states at that tick, then all integrate together.
Planners run on ticks that are multiples of ``plan_dt / control_dt``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .actuator import LaggedActuator, compute_gb
from .core import (
    LinearPlannerParams,
    NoiseConfig,
    Scenario,
    VehicleState,
    gain_at,
    initial_spacings,
)
from .lowlevel import PidState, StartState, pif_control, step_setpoints_mpc, step_vpid_linear
from .planner_linear import plan_target_speed
from .planner_mpc import shift_plan, solve_mpc, update_start_states

TRACE_FIELDS = (
    "x", "v", "a", "v_target", "a_target", "v_pid", "a_pid",
    "p_term", "i_term", "f_term", "control", "gb",
)
STATE_FIELDS = ("x", "v", "a")
QUANTITIES = {"position": 0, "speed": 1}


class SimulationError(RuntimeError):
    def __init__(self, tick: int, message: str):
        self.tick = tick
        super().__init__(f"tick {tick}: {message}")


@dataclass
class PlatoonTrace:
    """Per-tick arrays of shape ``(n_ticks, n_vehicles)``; lead is column 0.

    Planner/setpoint columns are NaN where a quantity does not apply
    (the lead, ``a_target`` for linear planners, ...). Solver diagnostics
    are per plan tick, shape ``(n_plan_ticks, n_vehicles)``.
    """

    t: np.ndarray
    data: dict[str, np.ndarray]
    plan_dt: float
    control_dt: float
    horizon_dt: float = 0.2
    planner_kinds: tuple[str, ...] = ()
    solver_iterations: np.ndarray | None = None
    solver_converged: np.ndarray | None = None
    solver_monotone: np.ndarray | None = None
    collision: dict | None = None

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[name]

    @property
    def n_ticks(self) -> int:
        return len(self.t)

    @property
    def n_vehicles(self) -> int:
        return self.data["v"].shape[1]

    @property
    def steps_per_plan(self) -> int:
        return int(round(self.plan_dt / self.control_dt))

    @property
    def plan_index(self) -> np.ndarray:
        return np.arange(0, self.n_ticks, self.steps_per_plan)

    def plan_series(self, name: str, vehicle: int) -> tuple[np.ndarray, np.ndarray]:
        idx = self.plan_index
        return self.t[idx], self.data[name][idx, vehicle]

    def spacing(self, vehicle: int) -> np.ndarray:
        return self.data["x"][:, vehicle - 1] - self.data["x"][:, vehicle]


def noise_stream(noise: NoiseConfig, vehicle: int, quantity: str) -> np.random.Generator:
    """Independent counter-based generator for one (vehicle, quantity) pair."""
    seq = np.random.SeedSequence([noise.seed & 0xFFFFFFFFFFFFFFFF, vehicle, QUANTITIES[quantity]])
    return np.random.Generator(np.random.Philox(seq))


def apply_measurement_noise(
    value: float, n: NoiseConfig, stream: np.random.Generator, quantity: str
) -> float:
    if not n.enabled:
        return value
    var = n.position_var if quantity == "position" else n.speed_var
    return value + math.sqrt(var) * stream.standard_normal()


def lead_speeds(s: Scenario) -> np.ndarray:
    t = np.arange(s.timing.n_ticks + 1) * s.timing.control_dt
    return np.maximum(s.lead_profile.speed(t, s.initial_speed), 0.0)


@dataclass
class _Follower:
    index: int
    cfg: object
    state: VehicleState
    pid: PidState
    actuator: LaggedActuator
    is_linear: bool
    v_target: float = math.nan
    a_target: float = math.nan
    start: StartState = field(default_factory=StartState)
    plan: np.ndarray | None = None
    t_plan: float = 0.0
    last_solve: object = None


def run_platoon(s: Scenario) -> PlatoonTrace:
    tm = s.timing
    dt = tm.control_dt
    n_ticks = tm.n_ticks + 1
    n_veh = s.n_followers + 1
    per_plan = tm.steps_per_plan
    n_plan = (n_ticks - 1) // per_plan + 1

    data = {name: np.full((n_ticks, n_veh), np.nan) for name in TRACE_FIELDS}
    t_arr = np.arange(n_ticks) * dt
    iters = np.zeros((n_plan, n_veh), dtype=int)
    conv = np.ones((n_plan, n_veh), dtype=bool)
    mono = np.ones((n_plan, n_veh), dtype=bool)

    v_lead = lead_speeds(s)
    lead = VehicleState(x=0.0, v=float(v_lead[0]), a=0.0)

    followers: list[_Follower] = []
    x = 0.0
    for i, (veh, gap) in enumerate(zip(s.vehicles, initial_spacings(s)), start=1):
        x -= gap
        v0 = s.initial_speed if veh.initial_speed is None else veh.initial_speed
        st = VehicleState(x=x, v=v0, a=0.0)
        f = _Follower(
            index=i,
            cfg=veh,
            state=st,
            pid=PidState(v_pid=v0),
            actuator=LaggedActuator(veh.actuator),
            is_linear=isinstance(veh.planner, LinearPlannerParams),
            start=StartState(v_start=v0, a_start=0.0),
        )
        f.v_target = v0
        f.a_target = 0.0
        followers.append(f)

    streams = {
        (f.index, q): noise_stream(s.noise, f.index, q) for f in followers for q in QUANTITIES
    }
    states = [lead] + [f.state for f in followers]
    kinds = ("lead",) + tuple("linear" if f.is_linear else "mpc" for f in followers)
    collision = None
    last = n_ticks - 1

    for k in range(n_ticks):
        t = k * dt
        lead.a = (v_lead[k + 1] - v_lead[k]) / dt if k < last else 0.0
        plan_tick = k % per_plan == 0
        # planners and controllers see the states at tick k
        for f in followers:
            pred = states[f.index - 1]
            st = f.state
            veh = f.cfg
            if plan_tick:
                _plan(f, pred, s, streams, t)
            pid = f.pid
            if f.is_linear:
                pid.v_pid = st.v if k == 0 else step_vpid_linear(
                    pid.v_pid, f.v_target, st.v, veh.controller, dt
                )
                pid.a_pid = 0.0
            else:
                pid.a_pid, pid.v_pid = step_setpoints_mpc(f.start, f.a_target, f.t_plan, t, tm)
            u_lim = gain_at(veh.actuator.cmd_scale, st.v)
            control = pif_control(pid, st.v, veh.controller, dt, u_limit=u_lim)
            gb = compute_gb(control, st.v, veh.actuator)
            st.a = f.actuator.step(gb, dt)

            row = data
            row["v_target"][k, f.index] = f.v_target if f.is_linear else np.nan
            row["a_target"][k, f.index] = np.nan if f.is_linear else f.a_target
            row["v_pid"][k, f.index] = pid.v_pid
            row["a_pid"][k, f.index] = np.nan if f.is_linear else pid.a_pid
            row["p_term"][k, f.index] = pid.p_term
            row["i_term"][k, f.index] = pid.i_term
            row["f_term"][k, f.index] = pid.f_term
            row["control"][k, f.index] = control
            row["gb"][k, f.index] = gb
            if plan_tick and not f.is_linear:
                j = k // per_plan
                iters[j, f.index] = f.last_solve.iterations
                conv[j, f.index] = f.last_solve.converged
                mono[j, f.index] = f.last_solve.monotone

        for j, st in enumerate(states):
            data["x"][k, j] = st.x
            data["v"][k, j] = st.v
            data["a"][k, j] = st.a

        for i in range(1, n_veh):
            if states[i - 1].x - states[i].x <= 0.0:
                collision = {"tick": k, "time": t, "vehicle": i}
                break
        if collision or k == last:
            break
        for f in followers:
            if not (math.isfinite(f.state.a) and math.isfinite(f.pid.control)):
                raise SimulationError(k, f"non-finite value for vehicle {f.index}")
        # integrate: lead follows its profile, followers by Euler
        lead.v = float(v_lead[k + 1])
        lead.x += lead.v * dt
        for f in followers:
            st = f.state
            st.v = max(st.v + st.a * dt, 0.0)
            st.x += st.v * dt

    end = k + 1
    data = {name: arr[:end] for name, arr in data.items()}
    n_plan_used = (end - 1) // per_plan + 1
    return PlatoonTrace(
        t=t_arr[:end],
        data=data,
        plan_dt=tm.plan_dt,
        control_dt=dt,
        horizon_dt=tm.horizon_dt,
        planner_kinds=kinds,
        solver_iterations=iters[:n_plan_used],
        solver_converged=conv[:n_plan_used],
        solver_monotone=mono[:n_plan_used],
        collision=collision,
    )


def _plan(f: _Follower, pred: VehicleState, s: Scenario, streams, t: float) -> None:
    st = f.state
    noise = s.noise
    x_meas = apply_measurement_noise(pred.x, noise, streams[(f.index, "position")], "position")
    v_meas = apply_measurement_noise(pred.v, noise, streams[(f.index, "speed")], "speed")
    v_meas = max(v_meas, 0.0)
    tm = s.timing
    p = f.cfg.planner
    if f.is_linear:
        f.v_target = plan_target_speed(
            x_meas - st.x, v_meas, st.v, p, prev_v_target=f.v_target, plan_dt=tm.plan_dt
        )
        return
    warm = None
    if f.plan is not None:
        warm = shift_plan(f.plan, tm.plan_dt / tm.horizon_dt)
    if f.plan is not None:
        # advance the surrogate start states with the previous target
        f.start = update_start_states(f.start, f.a_target, tm)
    res = solve_mpc(
        VehicleState(x=st.x, v=st.v, a=st.a),
        VehicleState(x=x_meas, v=v_meas, a=pred.a),
        warm,
        p,
        tm,
        a_prev=f.a_target,
    )
    f.plan = res.plan
    f.a_target = res.a_target
    f.t_plan = t
    f.last_solve = res


def run_ideal_tracking(
    planner: LinearPlannerParams,
    lead_profile,
    v0: float,
    duration: float,
    plan_dt: float = 0.05,
    control_dt: float = 0.01,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One linear-planner follower whose speed equals its latest ``v_target``.

    Isolates the planner from the low-level loop. Returns control-tick
    arrays ``(t, v_lead, v_ego)``.
    """
    per = int(round(plan_dt / control_dt))
    n = int(round(duration / control_dt)) + 1
    t = np.arange(n) * control_dt
    v_lead = np.maximum(lead_profile.speed(t, v0), 0.0)
    x_lead = np.concatenate(([0.0], np.cumsum(v_lead[1:] * control_dt)))
    v_ego = np.empty(n)
    x = -(planner.s_j + planner.H_t * v0)
    v = v0
    v_target = None
    for k in range(n):
        if k % per == 0:
            v_target = plan_target_speed(
                x_lead[k] - x, v_lead[k], v, planner, prev_v_target=v_target, plan_dt=plan_dt
            )
            v = v_target
        v_ego[k] = v
        if k + 1 < n:
            x += v * control_dt
    return t, v_lead, v_ego
