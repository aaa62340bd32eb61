import dataclasses
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from accsim.core import (
    ActuatorModel,
    ControllerConfig,
    LinearPlannerParams,
    MpcParams,
    NoiseConfig,
    Scenario,
    ScenarioError,
    Schedule,
    SinusoidProfile,
    StepProfile,
    TableProfile,
    TimingConfig,
    VehicleConfig,
    equilibrium_spacing,
    gain_at,
    initial_spacings,
    scenario_from_dict,
    scenario_to_dict,
    validate_scenario,
)


def one_follower(**kw) -> Scenario:
    return Scenario(vehicles=(VehicleConfig(),), **kw)


def test_default_timing_has_five_control_steps_per_plan():
    s = validate_scenario(one_follower(timing=TimingConfig(plan_dt=0.05, control_dt=0.01)))
    assert s.timing.steps_per_plan == 5
    assert s.timing.horizon_steps == 10


def test_non_integer_rate_ratio_rejected():
    with pytest.raises(ScenarioError, match="timing.plan_dt"):
        validate_scenario(one_follower(timing=TimingConfig(plan_dt=0.05, control_dt=0.03)))


def test_empty_platoon_rejected():
    with pytest.raises(ScenarioError, match="empty platoon"):
        validate_scenario(Scenario(vehicles=()))


@pytest.mark.parametrize(
    "patch, path",
    [
        ({"controller": {"ki": -0.1}}, "vehicles[0].controller.ki"),
        ({"controller": {"a_max": -1.0}}, "vehicles[0].controller"),
        ({"controller": {"overshoot_allowance": 0.0}}, "vehicles[0].controller.overshoot_allowance"),
        ({"controller": {"antiwindup": "sometimes"}}, "vehicles[0].controller.antiwindup"),
        ({"actuator": {"resp_scale": 0.0}}, "vehicles[0].actuator"),
        ({"planner": {"kind": "linear", "k_v": 0.0}}, "vehicles[0].planner.k_v"),
        ({"planner": {"kind": "mpc", "w_jerk": -1.0}}, "vehicles[0].planner.w_jerk"),
        ({"initial_spacing": -3.0}, "vehicles[0].initial_spacing"),
        ({"bogus": 1}, "vehicles[0].bogus"),
    ],
)
def test_first_violation_reported_with_field_path(patch, path):
    with pytest.raises(ScenarioError) as err:
        scenario_from_dict({"vehicles": [patch]})
    assert err.value.path == path


def test_unknown_top_level_key_rejected():
    with pytest.raises(ScenarioError, match="^colour"):
        scenario_from_dict({"vehicles": [{}], "colour": "red"})


def test_lead_step_below_zero_rejected():
    with pytest.raises(ScenarioError, match="lead_profile.dv"):
        validate_scenario(one_follower(initial_speed=3.0, lead_profile=StepProfile(dv=-5.0)))


def test_kv_ht_above_two_warns():
    with pytest.warns(UserWarning, match="not string stable"):
        validate_scenario(Scenario(vehicles=(VehicleConfig(planner=LinearPlannerParams(k_v=2.0, H_t=1.5)),)))


def test_schedule_interpolates_and_extrapolates_flat():
    g = Schedule(bp=(0.0, 10.0, 20.0), values=(1.0, 2.0, 4.0))
    assert gain_at(g, 5.0) == pytest.approx(1.5)
    assert gain_at(g, 15.0) == pytest.approx(3.0)
    assert gain_at(g, -3.0) == 1.0
    assert gain_at(g, 99.0) == 4.0
    assert gain_at(0.7, 12.0) == 0.7


def test_schedule_parsed_from_json():
    s = scenario_from_dict({"vehicles": [{"controller": {"kp": {"bp": [0, 30], "values": [0.5, 1.5]}}}]})
    assert gain_at(s.vehicles[0].controller.kp, 15.0) == pytest.approx(1.0)


def test_schedule_breakpoints_must_increase():
    with pytest.raises(ScenarioError, match="bp"):
        scenario_from_dict({"vehicles": [{"controller": {"kp": {"bp": [3, 1], "values": [1, 1]}}}]})


def test_equilibrium_spacing_by_planner_kind():
    assert equilibrium_spacing(LinearPlannerParams(s_j=4.0, H_t=1.5), 20.0) == 34.0
    assert equilibrium_spacing(MpcParams(H_t=1.5), 20.0) == 30.0
    s = Scenario(vehicles=(VehicleConfig(), VehicleConfig(initial_spacing=50.0)))
    assert initial_spacings(s) == [34.0, 50.0]


def test_table_profile_sets_initial_speed_when_omitted():
    s = scenario_from_dict({"vehicles": [{}], "lead_profile": {"kind": "table", "t": [0, 10], "v": [12, 14]}})
    assert s.initial_speed == 12.0


# -- round trip -------------------------------------------------------------

pos = st.floats(0.05, 5.0, allow_nan=False)
gains = st.one_of(
    st.floats(0.0, 3.0),
    st.builds(
        lambda vals: Schedule(tuple(float(10 * i) for i in range(len(vals))), tuple(vals)),
        st.lists(st.floats(0.0, 3.0), min_size=1, max_size=4),
    ),
)
controllers = st.builds(
    ControllerConfig,
    kp=gains,
    ki=gains,
    kf=gains,
    a_max=st.floats(0.5, 4.0),
    a_min=st.floats(-6.0, -0.5),
    overshoot_allowance=pos,
    antiwindup=st.sampled_from(["none", "clamp", "freeze"]),
    windup_limit=st.one_of(st.none(), pos),
    deadzone=st.floats(0.0, 0.5),
)
actuators = st.builds(ActuatorModel, cmd_scale=st.floats(0.5, 6.0), resp_scale=st.floats(0.5, 6.0))
planners = st.one_of(
    st.builds(LinearPlannerParams, s_j=pos, H_t=st.floats(0.5, 2.5), k_v=st.floats(0.05, 0.8)),
    st.builds(MpcParams, w_ttc=st.floats(0, 10), tau=st.floats(0, 3), solver=st.sampled_from(["lm", "pgd"])),
)
vehicles = st.builds(VehicleConfig, planner=planners, controller=controllers, actuator=actuators)
profiles = st.one_of(
    st.builds(StepProfile, t0=st.floats(0, 30), dv=st.floats(-5, 5), rate=st.one_of(st.none(), pos)),
    st.builds(SinusoidProfile, amplitude=st.floats(0, 3), omega=pos, t0=st.floats(0, 10)),
)
scenarios = st.builds(
    Scenario,
    vehicles=st.lists(vehicles, min_size=1, max_size=4).map(tuple),
    lead_profile=profiles,
    initial_speed=st.floats(10.0, 30.0),
    noise=st.builds(NoiseConfig, seed=st.integers(0, 2**63 - 1), enabled=st.booleans()),
    name=st.text(max_size=8),
)


@given(scenarios)
def test_round_trip_serialization(s):
    s = validate_scenario(s)
    text = json.dumps(scenario_to_dict(s))
    back = scenario_from_dict(json.loads(text))
    assert back == s


@given(scenarios)
def test_validated_scenarios_are_immutable(s):
    with pytest.raises(dataclasses.FrozenInstanceError):
        s.initial_speed = 1.0  # type: ignore[misc]


def test_table_profile_round_trip():
    s = one_follower(lead_profile=TableProfile(t=(0.0, 5.0), v=(20.0, 18.0), source="drive.csv"), initial_speed=20.0)
    assert scenario_from_dict(json.loads(json.dumps(scenario_to_dict(s)))) == s
