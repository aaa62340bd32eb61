"""Finite-horizon MPC planner producing a target acceleration.

The decision variables are the ego accelerations at each horizon step.
The ego rolls out by explicit Euler at ``horizon_dt`` against a predicted
lead trajectory whose acceleration decays as ``a0*exp(-tau*t^2/2)``.

Each stage carries four residuals (time-to-collision, distance,
acceleration, jerk). :func:`stage_cost` returns their weighted sum;
the optimizer minimizes the weighted sum of their *squares*, since the
plain sum is linear in acceleration and jerk and has no minimum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .core import MpcParams, TimingConfig, VehicleState
from .lowlevel import StartState

EXP_CLAMP = 50.0


def update_start_states(s: StartState, a_target: float, timing: TimingConfig) -> StartState:
    # the speed update uses the already-updated a_start
    a_start = s.a_start + timing.plan_dt / timing.horizon_dt * (a_target - s.a_start)
    v_start = s.v_start + timing.plan_dt * (a_target + a_start) / 2.0
    return StartState(v_start=v_start, a_start=a_start)


def start_state_closed_form(
    a_targets, plan_dt: float, horizon_dt: float, a_start0: float = 0.0
) -> np.ndarray:
    """``a_start`` after each of ``len(a_targets)`` plan steps, non-recursively."""
    a = np.asarray(a_targets, dtype=float)
    r = plan_dt / horizon_dt
    n = np.arange(1, len(a) + 1)
    out = (1.0 - r) ** n * a_start0
    for k in range(len(a)):
        m = np.arange(k + 1)
        out[k] += np.sum(r * (1.0 - r) ** (k - m) * a[m])
    return out


def predict_lead(
    lead: VehicleState, p: MpcParams, n_steps: int = 10, dt: float = 0.2
) -> dict[str, np.ndarray]:
    """Lead trajectory over the horizon; entry ``k`` is at ``t = (k+1)*dt``."""
    a0 = lead.a
    x, v, t = lead.x, lead.v, 0.0
    out = {name: np.empty(n_steps) for name in ("t", "x", "v", "a")}
    for k in range(n_steps):
        a = a0 * math.exp(-p.tau * t * t / 2.0)
        x = x + v * dt
        v = max(v + a * dt, 0.0)
        t = t + dt
        out["t"][k], out["x"][k], out["v"][k] = t, x, v
        out["a"][k] = a0 * math.exp(-p.tau * t * t / 2.0)
    return out


def mpc_desired_spacing(v_ego, v_lead, p: MpcParams):
    return (
        v_ego * p.H_t
        - (v_lead - v_ego) * p.H_t
        + (v_ego**2 - v_lead**2) / (2.0 * p.G)
    )


def _ttc_scale(v):
    return 0.3 / (np.sqrt(np.maximum(v, 0.0) + 0.5) + 0.1)


def sub_costs(a_ego, v_ego, jerk, s_lead, s_des) -> tuple:
    """The four stage residuals (ttc, dist, accel, jerk)."""
    gap_err = s_des - s_lead
    c_ttc = np.exp(np.minimum(gap_err * _ttc_scale(v_ego), EXP_CLAMP)) - 1.0
    c_dist = gap_err / (0.05 * v_ego + 0.5)
    c_accel = a_ego * (0.1 * v_ego + 1.0)
    c_jerk = jerk * (0.1 * v_ego + 1.0)
    return c_ttc, c_dist, c_accel, c_jerk


def stage_cost(
    ego: VehicleState, jerk: float, s_lead: float, s_des: float, p: MpcParams,
    squared: bool = False,
) -> float:
    r = sub_costs(ego.a, ego.v, jerk, s_lead, s_des)
    w = (p.w_ttc, p.w_dist, p.w_accel, p.w_jerk)
    if squared:
        return float(sum(wi * ri * ri for wi, ri in zip(w, r)))
    return float(sum(wi * ri for wi, ri in zip(w, r)))


@lru_cache(maxsize=32)
def _rollout_maps(n: int, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Linear maps from the acceleration plan to speeds / positions at k=0..n."""
    k = np.arange(n + 1)[:, None]
    m = np.arange(n)[None, :]
    mv = np.where(m < k, dt, 0.0)
    mx = dt * dt * np.maximum(k - 1 - m, 0)
    mv.setflags(write=False)
    mx.setflags(write=False)
    return mv, mx


@dataclass
class MpcProblem:
    """One planning instant: ego at the origin, lead ``gap`` metres ahead."""

    v0: float
    gap: float
    lead_x: np.ndarray  # lead positions at k=1..n, relative to the ego start
    lead_v: np.ndarray
    a_prev: float
    params: MpcParams
    dt: float = 0.2

    @property
    def n(self) -> int:
        return len(self.lead_x)

    def rollout(self, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mv, mx = _rollout_maps(self.n, self.dt)
        k = np.arange(self.n + 1)
        v = self.v0 + mv @ a
        x = k * self.dt * self.v0 + mx @ a
        return v, x

    @property
    def sqrt_weights(self) -> np.ndarray:
        p = self.params
        return np.sqrt(np.array([p.w_ttc, p.w_dist, p.w_accel, p.w_jerk]))

    def residuals(self, a: np.ndarray, need_jac: bool = True):
        """Weighted residual vector ``[ttc, dist, accel, jerk]`` and its Jacobian.

        Acceleration and jerk residuals sit at k = 0..n-1, the spacing ones
        at k = 1..n. The objective is ``r @ r``.
        """
        p = self.params
        dt, n = self.dt, self.n
        mv, mx = _rollout_maps(n, dt)
        v, x = self.rollout(a)
        jerk = np.diff(np.concatenate(([self.a_prev], a))) / dt

        vk = v[:-1]
        m = 0.1 * vk + 1.0
        vs = v[1:]
        d = mpc_desired_spacing(vs, self.lead_v, p) - (self.lead_x - x[1:])
        q = _ttc_scale(vs)
        z = d * q
        ez = np.exp(np.minimum(z, EXP_CLAMP))
        pd = 1.0 / (0.05 * vs + 0.5)
        sw = self.sqrt_weights
        r = np.concatenate((sw[0] * (ez - 1.0), sw[1] * d * pd, sw[2] * a * m, sw[3] * jerk * m))
        if not need_jac:
            return r, None

        dv_k, dv_s = mv[:-1], mv[1:]
        dd = (2 * p.H_t + vs / p.G)[:, None] * dv_s + mx[1:]
        sq = np.sqrt(np.maximum(vs, 0.0) + 0.5)
        dq_dv = -0.3 / (sq + 0.1) ** 2 / (2 * sq)
        dez = np.where(z > EXP_CLAMP, 0.0, ez)
        j_ttc = dez[:, None] * (q[:, None] * dd + (d * dq_dv)[:, None] * dv_s)
        j_dist = pd[:, None] * dd - (d * 0.05 * pd * pd)[:, None] * dv_s
        j_acc = np.diag(m) + (0.1 * a)[:, None] * dv_k
        diff = (np.eye(n) - np.eye(n, k=-1)) / dt
        j_jerk = m[:, None] * diff + (0.1 * jerk)[:, None] * dv_k
        jac = np.vstack((sw[0] * j_ttc, sw[1] * j_dist, sw[2] * j_acc, sw[3] * j_jerk))
        return r, jac

    def cost(self, a: np.ndarray) -> float:
        r, _ = self.residuals(a, need_jac=False)
        return float(r @ r)

    def cost_grad(self, a: np.ndarray, need_grad: bool = True):
        r, jac = self.residuals(a, need_jac=need_grad)
        f = float(r @ r)
        return f, (2.0 * jac.T @ r if need_grad else None)

    def project(self, a: np.ndarray) -> np.ndarray:
        """Clip to the acceleration box, then raise steps that would reverse."""
        p = self.params
        a = np.clip(a, p.a_min, p.a_max)
        v = self.v0
        for k in range(len(a)):
            if v + a[k] * self.dt < 0.0:
                a[k] = -v / self.dt
            v = max(v + a[k] * self.dt, 0.0)
        return a


@dataclass
class SolverResult:
    plan: np.ndarray
    cost: float
    iterations: int
    converged: bool
    costs: list[float] = field(default_factory=list)

    @property
    def a_target(self) -> float:
        return float(self.plan[0])

    @property
    def monotone(self) -> bool:
        return all(b <= a for a, b in zip(self.costs, self.costs[1:]))


def _start_point(problem: MpcProblem, warm) -> tuple[float, np.ndarray]:
    """The cheaper of the projected warm start and the all-zero plan."""
    candidates = [problem.project(np.zeros(problem.n))]
    if warm is not None:
        candidates.append(problem.project(np.array(warm, dtype=float)))
    scored = [(problem.cost(c), -i, c) for i, c in enumerate(candidates)]
    f, _, a = min(scored, key=lambda s: (s[0], s[1]))
    return f, a


def solve_pgd(problem: MpcProblem, warm: np.ndarray | None = None) -> SolverResult:
    """Projected gradient descent with Barzilai-Borwein steps.

    Each accepted iterate passes a sufficient-decrease test, so costs are
    non-increasing. Slower than :func:`solve_lm`; kept as a cross-check.
    """
    p = problem.params
    n = problem.n
    f, a = _start_point(problem, warm)
    f, g = problem.cost_grad(a)
    costs = [f]
    step = p.step_size
    converged = False
    it = 0
    while it < p.max_iter:
        if np.max(np.abs(problem.project(a - g) - a)) < p.tol:
            converged = True
            break
        while True:
            a_new = problem.project(a - step * g)
            s = a_new - a
            if not np.any(s):
                break
            f_new, g_new = problem.cost_grad(a_new)
            if f_new <= f - 1e-4 * (s @ s) / step:
                break
            step *= 0.5
            if step < 1e-14:
                s = np.zeros(n)
                break
        if not np.any(s):
            converged = True
            break
        it += 1
        y = g_new - g
        sy = s @ y
        a, f, g = a_new, f_new, g_new
        costs.append(f)
        step = (s @ s) / sy if sy > 1e-16 else p.step_size
        step = min(max(step, 1e-6), 10.0)
    return SolverResult(plan=a, cost=f, iterations=it, converged=converged, costs=costs)


def solve_lm(problem: MpcProblem, warm: np.ndarray | None = None) -> SolverResult:
    """Projected Levenberg-Marquardt on the weighted residuals.

    A trial step is accepted only if it lowers the cost, so the recorded
    cost sequence is non-increasing. The start point is the better of the
    (projected) warm start and the all-zero plan.
    """
    p = problem.params
    n = problem.n
    f, a = _start_point(problem, warm)
    r, jac = problem.residuals(a)
    costs = [f]
    lam = p.damping
    converged = False
    it = 0
    eye = np.eye(n)
    while it < p.max_iter:
        g = jac.T @ r
        if np.max(np.abs(problem.project(a - g) - a)) < p.tol:
            converged = True
            break
        jtj = jac.T @ jac
        # variables held at a bound by the gradient take no step
        eps = 1e-12
        pinned = ((a <= p.a_min + eps) & (g > 0)) | ((a >= p.a_max - eps) & (g < 0))
        free = ~pinned
        accepted = False
        while lam < 1e10:
            step = np.zeros(n)
            h = jtj[np.ix_(free, free)]
            step[free] = np.linalg.solve(h + lam * (np.diag(np.diag(h)) + eye[: free.sum(), : free.sum()]), -g[free])
            a_new = problem.project(a + step)
            if np.max(np.abs(a_new - a)) < p.tol:
                break
            r_new, jac_new = problem.residuals(a_new)
            f_new = float(r_new @ r_new)
            if f_new < f:
                accepted = True
                break
            lam *= 4.0
        if not accepted:
            converged = True
            break
        it += 1
        gain = f - f_new
        a, r, jac, f = a_new, r_new, jac_new, f_new
        costs.append(f)
        lam = max(lam / 3.0, 1e-9)
        if gain <= p.tol * max(f, 1.0):
            converged = True
            break
    return SolverResult(plan=a, cost=f, iterations=it, converged=converged, costs=costs)


def solve(problem: MpcProblem, warm: np.ndarray | None = None) -> SolverResult:
    if problem.params.solver == "pgd":
        return solve_pgd(problem, warm)
    return solve_lm(problem, warm)


def solve_mpc(
    ego: VehicleState,
    lead: VehicleState,
    prev_plan: np.ndarray | None,
    p: MpcParams,
    timing: TimingConfig | None = None,
    a_prev: float | None = None,
) -> SolverResult:
    """Plan the ego acceleration sequence; ``result.a_target`` is its first entry.

    ``ego.x`` and ``lead.x`` are positions on a common axis. ``a_prev`` is
    the previously applied target acceleration (defaults to ``ego.a``).
    """
    timing = timing or TimingConfig()
    n, dt = timing.horizon_steps, timing.horizon_dt
    pred = predict_lead(lead, p, n, dt)
    prob = MpcProblem(
        v0=ego.v,
        gap=lead.x - ego.x,
        lead_x=pred["x"] - ego.x,
        lead_v=pred["v"],
        a_prev=ego.a if a_prev is None else a_prev,
        params=p,
        dt=dt,
    )
    return solve(prob, prev_plan)


def shift_plan(plan: np.ndarray, shift: float) -> np.ndarray:
    """Advance a plan by ``shift`` horizon steps (fractional), holding the tail."""
    k = np.arange(len(plan), dtype=float)
    return np.interp(k + shift, k, plan)
