"""Constant-time-headway linear planner (target speed at plan rate)."""
from __future__ import annotations

from .core import LinearPlannerParams, gain_at


def desired_spacing(v: float, p: LinearPlannerParams) -> float:
    return p.s_j + p.H_t * v


def plan_target_speed(
    s_lead: float,
    v_lead: float,
    v_ego: float,
    p: LinearPlannerParams,
    prev_v_target: float | None = None,
    plan_dt: float = 0.05,
) -> float:
    """Target speed closing the spacing error at rate ``k_v``.

    The raw target ``(s_lead - s_des) * k_v + v_lead`` is clamped to be
    non-negative and, when ``prev_v_target`` is given, limited to change by
    at most ``a_max_plan*plan_dt`` up / ``a_min_plan*plan_dt`` down.
    """
    v_ref = v_lead if p.cth_speed == "lead" else v_ego
    s_des = desired_spacing(v_ref, p)
    v_target = (s_lead - s_des) * gain_at(p.k_v, v_ego) + v_lead
    if prev_v_target is not None:
        v_target = min(v_target, prev_v_target + p.a_max_plan * plan_dt)
        v_target = max(v_target, prev_v_target + p.a_min_plan * plan_dt)
    return max(v_target, 0.0)
