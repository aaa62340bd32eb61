"""Domain types and the scenario data model.

All configuration objects are frozen dataclasses in SI units. A
``Scenario`` is built from a plain dict (usually parsed JSON) with
:func:`scenario_from_dict`, which rejects unknown keys and reports the
first violated invariant with a field path.
"""
from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np


class ScenarioError(ValueError):
    """Invalid scenario content; the message starts with the field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass
class VehicleState:
    x: float = 0.0
    v: float = 0.0
    a: float = 0.0


@dataclass(frozen=True)
class Schedule:
    """Piecewise-linear lookup over ego speed, flat outside the breakpoints."""

    bp: tuple[float, ...]
    values: tuple[float, ...]

    def __call__(self, v: float) -> float:
        if len(self.bp) == 1:
            return self.values[0]
        return float(np.interp(v, self.bp, self.values))

    def scaled(self, factor: float) -> "Schedule":
        return Schedule(self.bp, tuple(factor * y for y in self.values))


Gain = Union[float, Schedule]


def gain_at(g: Gain, v: float) -> float:
    return g(v) if isinstance(g, Schedule) else g


def scale_gain(g: Gain, factor: float) -> Gain:
    return g.scaled(factor) if isinstance(g, Schedule) else g * factor


def _gain_min(g: Gain) -> float:
    return min(g.values) if isinstance(g, Schedule) else g


@dataclass(frozen=True)
class TimingConfig:
    plan_dt: float = 0.05
    control_dt: float = 0.01
    horizon_dt: float = 0.2
    mpc_horizon: float = 2.0
    duration: float = 60.0

    @property
    def steps_per_plan(self) -> int:
        return int(round(self.plan_dt / self.control_dt))

    @property
    def horizon_steps(self) -> int:
        return int(round(self.mpc_horizon / self.horizon_dt))

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration / self.control_dt))


@dataclass(frozen=True)
class ControllerConfig:
    kp: Gain = 1.0
    ki: Gain = 0.0
    kf: Gain = 0.0
    a_max: float = 2.0
    a_min: float = -3.5
    overshoot_allowance: float = 2.0
    # "none" | "clamp" | "freeze"
    antiwindup: str = "none"
    # |integral| bound for "clamp"; None means a_max / ki
    windup_limit: float | None = None
    deadzone: float = 0.0


@dataclass(frozen=True)
class ActuatorModel:
    # may be a speed schedule; the fitted default is a constant
    cmd_scale: Gain = 3.0
    resp_scale: float = 3.0
    # first-order lag of the realized acceleration, seconds; 0 disables it
    lag: float = 0.0

    def ratio(self, v: float = 0.0) -> float:
        """``resp_scale / cmd_scale``: > 1 overshooting, < 1 undershooting."""
        return self.resp_scale / gain_at(self.cmd_scale, v)


@dataclass(frozen=True)
class NoiseConfig:
    position_var: float = 0.25
    speed_var: float = 0.04
    seed: int = 0
    enabled: bool = False


@dataclass(frozen=True)
class LinearPlannerParams:
    kind: str = "linear"
    s_j: float = 4.0
    H_t: float = 1.5
    k_v: Gain = 0.3
    a_max_plan: float = 1.5
    a_min_plan: float = -3.5
    # "lead" (v_lead-based constant time headway) or "ego"
    cth_speed: str = "lead"


@dataclass(frozen=True)
class MpcParams:
    kind: str = "mpc"
    w_ttc: float = 5.0
    w_dist: float = 0.1
    w_accel: float = 10.0
    w_jerk: float = 20.0
    H_t: float = 1.5
    tau: float = 1.5
    G: float = 9.81
    a_max: float = 1.5
    a_min: float = -3.5
    # "lm" (projected Levenberg-Marquardt) or "pgd" (projected gradient)
    solver: str = "lm"
    max_iter: int = 100
    step_size: float = 0.01
    damping: float = 1e-3
    tol: float = 1e-6


PlannerParams = Union[LinearPlannerParams, MpcParams]


@dataclass(frozen=True)
class VehicleConfig:
    planner: PlannerParams = field(default_factory=LinearPlannerParams)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    actuator: ActuatorModel = field(default_factory=ActuatorModel)
    # None: start at the planner's equilibrium spacing / the scenario speed
    initial_spacing: float | None = None
    initial_speed: float | None = None


# -- lead profiles ---------------------------------------------------------


@dataclass(frozen=True)
class ConstantProfile:
    kind: str = "constant"

    def speed(self, t: np.ndarray, v0: float) -> np.ndarray:
        return np.full_like(np.asarray(t, dtype=float), v0)


@dataclass(frozen=True)
class StepProfile:
    """Speed change of ``dv`` right after ``t0``.

    ``rate=None`` jumps in one tick; otherwise the change is ramped at
    ``rate`` m/s^2.
    """

    kind: str = "step"
    t0: float = 10.0
    dv: float = -5.0
    rate: float | None = None

    def speed(self, t: np.ndarray, v0: float) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.rate is None:
            return np.where(t > self.t0 + 1e-9, v0 + self.dv, v0)
        ramp = np.clip((t - self.t0) * self.rate, 0.0, abs(self.dv))
        return v0 + math.copysign(1.0, self.dv) * ramp


@dataclass(frozen=True)
class SinusoidProfile:
    kind: str = "sinusoid"
    amplitude: float = 1.0
    omega: float = 0.5
    t0: float = 0.0

    def speed(self, t: np.ndarray, v0: float) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        phase = np.where(t >= self.t0, self.omega * (t - self.t0), 0.0)
        return v0 + self.amplitude * np.sin(phase)


@dataclass(frozen=True)
class TableProfile:
    """Absolute lead speeds, linearly interpolated; flat beyond the ends."""

    kind: str = "table"
    t: tuple[float, ...] = (0.0,)
    v: tuple[float, ...] = (0.0,)
    source: str | None = None

    def speed(self, t: np.ndarray, v0: float) -> np.ndarray:
        return np.interp(np.asarray(t, dtype=float), self.t, self.v)


LeadProfile = Union[ConstantProfile, StepProfile, SinusoidProfile, TableProfile]

PROFILE_KINDS = {
    "constant": ConstantProfile,
    "step": StepProfile,
    "sinusoid": SinusoidProfile,
    "table": TableProfile,
}
PLANNER_KINDS = {"linear": LinearPlannerParams, "mpc": MpcParams}


@dataclass(frozen=True)
class Scenario:
    vehicles: tuple[VehicleConfig, ...]
    timing: TimingConfig = field(default_factory=TimingConfig)
    lead_profile: LeadProfile = field(default_factory=ConstantProfile)
    initial_speed: float = 20.0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    name: str = ""
    description: str = ""

    @property
    def n_followers(self) -> int:
        return len(self.vehicles)


# -- equilibrium helpers ---------------------------------------------------


def equilibrium_spacing(planner: PlannerParams, v: float) -> float:
    """Spacing at which the planner asks for zero change at common speed ``v``."""
    if isinstance(planner, LinearPlannerParams):
        return planner.s_j + planner.H_t * v
    return planner.H_t * v


def initial_spacings(s: Scenario) -> list[float]:
    out = []
    for veh in s.vehicles:
        if veh.initial_spacing is not None:
            out.append(veh.initial_spacing)
        else:
            v = s.initial_speed if veh.initial_speed is None else veh.initial_speed
            out.append(equilibrium_spacing(veh.planner, v))
    return out


# -- dict conversion -------------------------------------------------------


def _check_keys(cls, data: dict, path: str) -> None:
    if not isinstance(data, dict):
        raise ScenarioError(path, f"expected an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ScenarioError(f"{path}.{key}" if path else key, "unknown key")


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(path, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ScenarioError(path, "must be finite")
    return value


def _gain(value: Any, path: str) -> Gain:
    if isinstance(value, dict):
        _check_keys(Schedule, value, path)
        try:
            bp = tuple(_number(b, f"{path}.bp[{i}]") for i, b in enumerate(value["bp"]))
            vals = tuple(
                _number(y, f"{path}.values[{i}]") for i, y in enumerate(value["values"])
            )
        except KeyError as exc:
            raise ScenarioError(path, f"missing {exc.args[0]!r}") from None
        if not bp or len(bp) != len(vals):
            raise ScenarioError(path, "bp and values must be non-empty and equal length")
        if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise ScenarioError(f"{path}.bp", "breakpoints must be strictly increasing")
        return Schedule(bp, vals)
    return _number(value, path)


def _simple(cls, data: dict, path: str, **special):
    """Build a flat dataclass, coercing numeric fields."""
    _check_keys(cls, data, path)
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        fpath = f"{path}.{f.name}" if path else f.name
        if f.name in special:
            kwargs[f.name] = special[f.name](value, fpath)
        elif f.type in ("float", "float | None"):
            kwargs[f.name] = None if value is None else _number(value, fpath)
        elif f.type == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ScenarioError(fpath, f"expected an integer, got {value!r}")
            kwargs[f.name] = value
        elif f.type == "bool":
            if not isinstance(value, bool):
                raise ScenarioError(fpath, f"expected true/false, got {value!r}")
            kwargs[f.name] = value
        elif f.type in ("str", "str | None"):
            if value is not None and not isinstance(value, str):
                raise ScenarioError(fpath, f"expected a string, got {value!r}")
            kwargs[f.name] = value
        else:
            kwargs[f.name] = value
    return cls(**kwargs)


def _tagged(kinds: dict, data: Any, path: str, default: str):
    if not isinstance(data, dict):
        raise ScenarioError(path, "expected an object")
    kind = data.get("kind", default)
    if kind not in kinds:
        raise ScenarioError(f"{path}.kind", f"unknown kind {kind!r}")
    return kinds[kind], kind


def _profile(data: Any, path: str) -> LeadProfile:
    if isinstance(data, dict) and data.get("kind") == "external":
        # resolved by io.load_scenario before validation; inline form only here
        raise ScenarioError(path, "external profile must be loaded via load_scenario")
    cls, _ = _tagged(PROFILE_KINDS, data, path, "constant")
    if cls is TableProfile:
        _check_keys(cls, data, path)
        t = tuple(_number(x, f"{path}.t[{i}]") for i, x in enumerate(data.get("t", ())))
        v = tuple(_number(x, f"{path}.v[{i}]") for i, x in enumerate(data.get("v", ())))
        return TableProfile(t=t, v=v, source=data.get("source"))
    return _simple(cls, data, path)


def _planner(data: Any, path: str) -> PlannerParams:
    cls, _ = _tagged(PLANNER_KINDS, data, path, "linear")
    special = {"k_v": _gain} if cls is LinearPlannerParams else {}
    return _simple(cls, data, path, **special)


def _vehicle(data: Any, path: str) -> VehicleConfig:
    _check_keys(VehicleConfig, data, path)
    kwargs: dict[str, Any] = {}
    if "planner" in data:
        kwargs["planner"] = _planner(data["planner"], f"{path}.planner")
    if "controller" in data:
        kwargs["controller"] = _simple(
            ControllerConfig, data["controller"], f"{path}.controller",
            kp=_gain, ki=_gain, kf=_gain,
        )
    if "actuator" in data:
        kwargs["actuator"] = _simple(
            ActuatorModel, data["actuator"], f"{path}.actuator", cmd_scale=_gain
        )
    for key in ("initial_spacing", "initial_speed"):
        if data.get(key) is not None:
            kwargs[key] = _number(data[key], f"{path}.{key}")
    return VehicleConfig(**kwargs)


def scenario_from_dict(data: dict) -> Scenario:
    """Parse and validate a scenario dict; defaults fill omitted fields."""
    _check_keys(Scenario, data, "")
    if "vehicles" not in data or not isinstance(data["vehicles"], list):
        raise ScenarioError("vehicles", "expected a list of follower vehicles")
    vehicles = tuple(_vehicle(v, f"vehicles[{i}]") for i, v in enumerate(data["vehicles"]))
    kwargs: dict[str, Any] = {"vehicles": vehicles}
    if "timing" in data:
        kwargs["timing"] = _simple(TimingConfig, data["timing"], "timing")
    if "lead_profile" in data:
        kwargs["lead_profile"] = _profile(data["lead_profile"], "lead_profile")
    if "noise" in data:
        kwargs["noise"] = _simple(NoiseConfig, data["noise"], "noise")
    if "initial_speed" in data:
        kwargs["initial_speed"] = _number(data["initial_speed"], "initial_speed")
    elif isinstance(kwargs.get("lead_profile"), TableProfile) and kwargs["lead_profile"].v:
        # recorded drives carry absolute speeds; start the platoon there
        kwargs["initial_speed"] = kwargs["lead_profile"].v[0]
    for key in ("name", "description"):
        if key in data:
            kwargs[key] = str(data[key])
    return validate_scenario(Scenario(**kwargs))


def _plain(obj: Any) -> Any:
    if isinstance(obj, Schedule):
        return {"bp": list(obj.bp), "values": list(obj.values)}
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(x) for x in obj]
    return obj


def scenario_to_dict(s: Scenario) -> dict:
    return _plain(s)


# -- validation ------------------------------------------------------------


def _is_multiple(big: float, small: float) -> bool:
    ratio = big / small
    return round(ratio) >= 1 and abs(ratio - round(ratio)) < 1e-9


def validate_scenario(s: Scenario) -> Scenario:
    """Check every invariant of the scenario model; returns ``s`` unchanged."""
    tm = s.timing
    for name in ("plan_dt", "control_dt", "horizon_dt", "mpc_horizon", "duration"):
        if getattr(tm, name) <= 0:
            raise ScenarioError(f"timing.{name}", "must be > 0")
    if not _is_multiple(tm.plan_dt, tm.control_dt):
        raise ScenarioError(
            "timing.plan_dt", "must be an integer multiple of control_dt (non-integer ratio)"
        )
    if not _is_multiple(tm.mpc_horizon, tm.horizon_dt):
        raise ScenarioError("timing.mpc_horizon", "must be an integer multiple of horizon_dt")
    if not s.vehicles:
        raise ScenarioError("vehicles", "empty platoon: at least one follower is required")
    if s.initial_speed < 0:
        raise ScenarioError("initial_speed", "must be >= 0")

    n = s.noise
    if n.position_var < 0 or n.speed_var < 0:
        raise ScenarioError("noise", "variances must be >= 0")

    prof = s.lead_profile
    if isinstance(prof, TableProfile):
        if len(prof.t) < 1 or len(prof.t) != len(prof.v):
            raise ScenarioError("lead_profile", "t and v must be non-empty and equal length")
        if any(b <= a for a, b in zip(prof.t, prof.t[1:])):
            raise ScenarioError("lead_profile.t", "times must be strictly increasing")
        if min(prof.v) < 0:
            raise ScenarioError("lead_profile.v", "speeds must be >= 0")
    elif isinstance(prof, StepProfile):
        if prof.rate is not None and prof.rate <= 0:
            raise ScenarioError("lead_profile.rate", "must be > 0")
        if s.initial_speed + prof.dv < 0:
            raise ScenarioError("lead_profile.dv", "step would drive the lead below 0 m/s")
    elif isinstance(prof, SinusoidProfile):
        if prof.omega <= 0:
            raise ScenarioError("lead_profile.omega", "must be > 0")
        if s.initial_speed - abs(prof.amplitude) < 0:
            raise ScenarioError("lead_profile.amplitude", "would drive the lead below 0 m/s")

    for i, veh in enumerate(s.vehicles):
        p = f"vehicles[{i}]"
        _validate_controller(veh.controller, f"{p}.controller")
        act = veh.actuator
        if _gain_min(act.cmd_scale) <= 0 or act.resp_scale <= 0:
            raise ScenarioError(f"{p}.actuator", "cmd_scale and resp_scale must be > 0")
        if act.lag < 0:
            raise ScenarioError(f"{p}.actuator.lag", "must be >= 0")
        _validate_planner(veh.planner, tm, f"{p}.planner")
        if veh.initial_spacing is not None and veh.initial_spacing <= 0:
            raise ScenarioError(f"{p}.initial_spacing", "must be > 0")
        if veh.initial_speed is not None and veh.initial_speed < 0:
            raise ScenarioError(f"{p}.initial_speed", "must be >= 0")
    for i, gap in enumerate(initial_spacings(s)):
        if gap <= 0:
            raise ScenarioError(f"vehicles[{i}].initial_spacing", "equilibrium spacing is not > 0")
    return s


def _validate_controller(c: ControllerConfig, path: str) -> None:
    for name in ("kp", "ki", "kf"):
        if _gain_min(getattr(c, name)) < 0:
            raise ScenarioError(f"{path}.{name}", "must be >= 0")
    if not c.a_min < 0 < c.a_max:
        raise ScenarioError(path, "require a_min < 0 < a_max")
    if c.overshoot_allowance <= 0:
        raise ScenarioError(f"{path}.overshoot_allowance", "must be > 0")
    if c.antiwindup not in ("none", "clamp", "freeze"):
        raise ScenarioError(f"{path}.antiwindup", f"unknown mode {c.antiwindup!r}")
    if c.windup_limit is not None and c.windup_limit <= 0:
        raise ScenarioError(f"{path}.windup_limit", "must be > 0")
    if c.deadzone < 0:
        raise ScenarioError(f"{path}.deadzone", "must be >= 0")


def _validate_planner(p: PlannerParams, tm: TimingConfig, path: str) -> None:
    if isinstance(p, LinearPlannerParams):
        if p.s_j <= 0 or p.H_t <= 0:
            raise ScenarioError(path, "s_j and H_t must be > 0")
        if _gain_min(p.k_v) <= 0:
            raise ScenarioError(f"{path}.k_v", "must be > 0")
        if not p.a_min_plan < 0 < p.a_max_plan:
            raise ScenarioError(path, "require a_min_plan < 0 < a_max_plan")
        if p.cth_speed not in ("lead", "ego"):
            raise ScenarioError(f"{path}.cth_speed", "must be 'lead' or 'ego'")
        kv_max = max(p.k_v.values) if isinstance(p.k_v, Schedule) else p.k_v
        if kv_max * p.H_t > 2:
            warnings.warn(
                f"{path}: k_v*H_t = {kv_max * p.H_t:.3g} > 2, planner is not string stable",
                stacklevel=3,
            )
    else:
        for name in ("w_ttc", "w_dist", "w_accel", "w_jerk"):
            if getattr(p, name) < 0:
                raise ScenarioError(f"{path}.{name}", "weights must be >= 0")
        if tm.horizon_steps < 2:
            raise ScenarioError("timing.mpc_horizon", "MPC needs at least 2 horizon steps")
        if p.H_t <= 0 or p.tau < 0 or p.G <= 0:
            raise ScenarioError(path, "H_t and G must be > 0, tau >= 0")
        if not p.a_min < 0 < p.a_max:
            raise ScenarioError(path, "require a_min < 0 < a_max")
        if p.solver not in ("lm", "pgd"):
            raise ScenarioError(f"{path}.solver", f"unknown solver {p.solver!r}")
        if p.max_iter < 1 or p.step_size <= 0 or p.damping <= 0 or p.tol <= 0:
            raise ScenarioError(path, "solver settings must be positive")
