"""100 Hz setpoint generation and the PI/PIF control law."""
from __future__ import annotations

from dataclasses import dataclass

from .core import ControllerConfig, TimingConfig, gain_at


@dataclass
class PidState:
    v_pid: float = 0.0
    a_pid: float = 0.0
    integral: float = 0.0
    control: float = 0.0
    p_term: float = 0.0
    i_term: float = 0.0
    f_term: float = 0.0


@dataclass
class StartState:
    v_start: float = 0.0
    a_start: float = 0.0


def step_vpid_linear(
    v_pid: float, v_target: float, v_ego: float, c: ControllerConfig, dt: float
) -> float:
    """One control tick of the speed setpoint for a target-speed planner.

    First snaps ``v_pid`` back into ``v_ego +/- overshoot_allowance`` when it
    is outside and the target lies on the returning side, then moves it
    toward ``v_target`` at no more than ``a_max``/``a_min``.
    """
    oa = c.overshoot_allowance
    if v_pid > v_ego + oa and v_target < v_pid:
        v_pid = max(v_target, v_ego + oa)
    elif v_pid < v_ego - oa and v_target > v_pid:
        v_pid = min(v_target, v_ego - oa)

    if v_target > v_pid + c.a_max * dt:
        return v_pid + c.a_max * dt
    if v_target < v_pid + c.a_min * dt:
        return v_pid + c.a_min * dt
    return v_target


def step_setpoints_mpc(
    start: StartState, a_target: float, t_plan: float, t: float, timing: TimingConfig
) -> tuple[float, float]:
    """Acceleration and speed setpoints at control time ``t`` of a plan period."""
    dt = t - t_plan
    a_pid = start.a_start + dt * (a_target - start.a_start) / timing.horizon_dt
    v_pid = start.v_start + dt * (a_pid + start.a_start) / 2.0
    return a_pid, v_pid


def windup_limit(c: ControllerConfig, v_ego: float) -> float:
    if c.windup_limit is not None:
        return c.windup_limit
    ki = gain_at(c.ki, v_ego)
    return c.a_max / ki if ki > 0 else float("inf")


def pif_control(
    state: PidState,
    v_ego: float,
    c: ControllerConfig,
    dt: float,
    u_limit: float = float("inf"),
) -> float:
    """Proportional-integral(-feedforward) law on ``e = v_pid - v_ego``.

    Uses the setpoints already stored in ``state``; updates the integral and
    the logged P/I/F terms in place and returns the control input.
    ``u_limit`` is the control magnitude at which the pedal saturates; it
    only matters for the ``freeze`` anti-windup mode.
    """
    e = state.v_pid - v_ego
    if abs(e) <= c.deadzone:
        e = 0.0
    kp = gain_at(c.kp, v_ego)
    ki = gain_at(c.ki, v_ego)
    kf = gain_at(c.kf, v_ego)

    prev_integral = state.integral
    state.integral += e * dt
    if c.antiwindup == "clamp":
        lim = windup_limit(c, v_ego)
        state.integral = min(lim, max(-lim, state.integral))

    state.p_term = kp * e
    state.i_term = ki * state.integral
    state.f_term = kf * state.a_pid
    control = state.p_term + state.i_term + state.f_term

    if c.antiwindup == "freeze" and abs(control) >= u_limit and e * control > 0:
        # pedal saturated and integrating deeper into saturation: hold
        state.integral = prev_integral
        state.i_term = ki * state.integral
        control = state.p_term + state.i_term + state.f_term

    state.control = control
    return control
