"""Bundled scenarios, one per simulated finding plus the fast/slow real-car pair.

``build_gallery`` is the source of truth; ``scripts/make_gallery.py``
writes it out as the JSON files under ``accsim/scenarios`` that
``load`` reads back.
"""
from __future__ import annotations

import dataclasses
import math
from importlib import resources

from .core import (
    ActuatorModel,
    ConstantProfile,
    ControllerConfig,
    LinearPlannerParams,
    MpcParams,
    NoiseConfig,
    Scenario,
    SinusoidProfile,
    StepProfile,
    TimingConfig,
    VehicleConfig,
    scenario_to_dict,
)

# linear + PI, calibrated so the matched P+I platoon is the reference case
LINEAR_PI = ControllerConfig(kp=1.3, ki=0.5)
# MPC + PIF defaults shared by the F-gain comparison
MPC_PIF = ControllerConfig(kp=1.0, ki=0.33, kf=1.0)

REALCAR_FAST = ControllerConfig(kp=1.0, ki=0.33, kf=1.2)
REALCAR_SLOW = ControllerConfig(kp=0.5, ki=0.33, kf=1.0)
REALCAR_OMEGA = 0.1

EXPECTED = {
    "undershoot_actuator": "last follower amplifies the lead step (ratio > 1)",
    "overshoot_actuator": "last follower damps the lead step (ratio < 1)",
    "windup_pi": "integral windup: followers overshoot the new lead speed by >= 0.3 m/s",
    "p_only": "no integral term: overshoot < 0.1 m/s",
    "small_p": "slow P gain: platoon amplifies",
    "large_p": "doubled P gain: lower amplification than small_p",
    "ff_kf1": "MPC + PIF reference for the F-gain comparison",
    "ff_kf2": "doubled F gain: slightly lower amplification, noisier control",
    "ff_kf2_deadzone": "doubled F gain with a 0.1 m/s deadzone on the speed error",
    "noise": "measurement noise raises follower jerk several-fold",
    "noise_large_p": "doubled P gain under noise: jerk rises further",
    "realcar_fast": "fast low-level controller behind an oscillating lead",
    "realcar_slow": "slow low-level controller behind an oscillating lead",
    "equilibrium": "platoon at rest in equilibrium: speeds never drift",
    "equilibrium_mpc": "MPC platoon in equilibrium: speeds never drift",
    "recorded_drive": "linear + PI platoon behind a recorded (synthetic) 20 Hz lead drive",
}


def _linear(ctrl: ControllerConfig = LINEAR_PI, resp: float = 3.0) -> VehicleConfig:
    return VehicleConfig(
        planner=LinearPlannerParams(),
        controller=ctrl,
        actuator=ActuatorModel(cmd_scale=3.0, resp_scale=resp),
    )


def _mpc(ctrl: ControllerConfig = MPC_PIF, cmd: float = 3.0) -> VehicleConfig:
    return VehicleConfig(
        planner=MpcParams(),
        controller=ctrl,
        actuator=ActuatorModel(cmd_scale=cmd, resp_scale=3.0),
    )


def _canonical_step(name: str, veh: VehicleConfig, description: str, **kw) -> Scenario:
    """Five followers at 20 m/s; the lead drops 5 m/s at t = 10 s."""
    return Scenario(
        vehicles=(veh,) * 5,
        timing=TimingConfig(duration=60.0),
        lead_profile=StepProfile(t0=10.0, dv=-5.0),
        initial_speed=20.0,
        name=name,
        description=description,
        **kw,
    )


def _mpc_step(name: str, veh: VehicleConfig, description: str) -> Scenario:
    """Three MPC followers; the lead slows by 2 m/s at 2 m/s^2 from t = 10 s."""
    return Scenario(
        vehicles=(veh,) * 3,
        timing=TimingConfig(duration=60.0),
        lead_profile=StepProfile(t0=10.0, dv=-2.0, rate=2.0),
        initial_speed=20.0,
        name=name,
        description=description,
    )


def _realcar(name: str, ctrl: ControllerConfig, cmd: float, description: str) -> Scenario:
    return Scenario(
        vehicles=(_mpc(ctrl, cmd),),
        timing=TimingConfig(duration=120.0),
        lead_profile=SinusoidProfile(amplitude=1.0, omega=REALCAR_OMEGA, t0=5.0),
        initial_speed=20.0,
        name=name,
        description=description,
    )


def build_gallery() -> dict[str, Scenario]:
    noisy = NoiseConfig(enabled=True, seed=7)
    g = [
        _canonical_step("undershoot_actuator", _linear(resp=1.8), "undershooting actuator, resp/cmd = 0.6"),
        _canonical_step("overshoot_actuator", _linear(resp=3.9), "overshooting actuator, resp/cmd = 1.3"),
        _canonical_step("windup_pi", _linear(), "P+I without anti-windup"),
        _canonical_step(
            "p_only", _linear(dataclasses.replace(LINEAR_PI, ki=0.0)), "P only, same planner and actuator"
        ),
        _canonical_step(
            "small_p", _linear(dataclasses.replace(LINEAR_PI, kp=0.65)), "half the reference P gain"
        ),
        _canonical_step("large_p", _linear(), "reference P gain, double small_p"),
        _mpc_step("ff_kf1", _mpc(), "MPC + PIF, kf = 1"),
        _mpc_step("ff_kf2", _mpc(dataclasses.replace(MPC_PIF, kf=2.0)), "MPC + PIF, kf = 2"),
        _mpc_step(
            "ff_kf2_deadzone",
            _mpc(dataclasses.replace(MPC_PIF, kf=2.0, deadzone=0.1)),
            "MPC + PIF, kf = 2, 0.1 m/s deadzone",
        ),
        _canonical_step("noise", _linear(), "reference linear + PI with measurement noise", noise=noisy),
        _canonical_step(
            "noise_large_p",
            _linear(dataclasses.replace(LINEAR_PI, kp=2.6)),
            "doubled P gain with measurement noise",
            noise=noisy,
        ),
        _realcar("realcar_fast", REALCAR_FAST, 3.0, "fast low-level controller: kp 1.0, ki 0.33, kf 1.2, gb = control/3"),
        _realcar("realcar_slow", REALCAR_SLOW, 5.0, "slow low-level controller: kp 0.5, ki 0.33, kf 1.0, gb = control/5"),
        Scenario(
            vehicles=(_linear(),) * 5,
            timing=TimingConfig(duration=60.0),
            lead_profile=ConstantProfile(),
            name="equilibrium",
            description="constant lead, equilibrium spacing",
        ),
        Scenario(
            vehicles=(_mpc(),) * 3,
            timing=TimingConfig(duration=60.0),
            lead_profile=ConstantProfile(),
            name="equilibrium_mpc",
            description="constant lead, MPC followers at equilibrium spacing",
        ),
    ]
    return {s.name: s for s in g}


def names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("accsim.scenarios").iterdir() if p.name.endswith(".json"))


def path(name: str):
    return resources.files("accsim.scenarios") / f"{name}.json"


def recorded_lead(hz: float = 20.0, duration: float = 60.0) -> tuple[list[float], list[float]]:
    """Smooth stand-in for a natural-driving lead speed log."""
    n = int(round(duration * hz))
    t = [i / hz for i in range(n + 1)]
    v = [15.0 + 2.0 * math.sin(0.15 * x) + 0.8 * math.sin(0.45 * x + 1.0) for x in t]
    return t, v


def recorded_drive_dict(csv_name: str = "recorded_lead.csv") -> dict:
    s = Scenario(vehicles=(_linear(),) * 3, timing=TimingConfig(duration=60.0), name="recorded_drive",
                 description="lead speed replayed from a 20 Hz CSV log")
    d = scenario_to_dict(s)
    d["lead_profile"] = {"kind": "external", "path": csv_name}
    del d["initial_speed"]  # taken from the first logged speed
    return d


def load(name: str) -> Scenario:
    """Bundled scenario by name (without the ``.json`` suffix)."""
    from .io import load_scenario

    p = path(name)
    if not p.is_file():
        raise KeyError(f"no bundled scenario {name!r}; have {', '.join(names())}")
    with resources.as_file(p) as fp:
        return load_scenario(fp)
