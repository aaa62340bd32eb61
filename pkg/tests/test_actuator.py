import pytest
from hypothesis import given
from hypothesis import strategies as st

from accsim.actuator import LaggedActuator, compute_gb, gb2accel
from accsim.core import ActuatorModel, Schedule

M3 = ActuatorModel(cmd_scale=3.0, resp_scale=3.0)


@pytest.mark.parametrize("control, gb", [(0.0, 0.0), (1.0, 1.0 / 3.0), (10.0, 1.0), (-10.0, -1.0)])
def test_compute_gb(control, gb):
    assert compute_gb(control, 15.0, M3) == pytest.approx(gb)


@pytest.mark.parametrize("gb, a", [(0.2, 0.6), (0.0, 0.0), (-1.0, -3.0)])
def test_gb2accel(gb, a):
    assert gb2accel(gb, M3) == pytest.approx(a)


def test_undershooting_chain():
    m = ActuatorModel(cmd_scale=5.0, resp_scale=3.0)
    assert gb2accel(compute_gb(1.0, 10.0, m), m) == pytest.approx(0.6)
    assert m.ratio() < 1


def test_speed_indexed_command_scale():
    m = ActuatorModel(cmd_scale=Schedule((0.0, 20.0), (2.0, 4.0)), resp_scale=3.0)
    assert compute_gb(1.5, 10.0, m) == pytest.approx(0.5)
    assert m.ratio(10.0) == pytest.approx(1.0)


def test_lag_converges_to_static_map():
    lag = LaggedActuator(ActuatorModel(lag=0.3))
    a = [lag.step(0.5, 0.01) for _ in range(500)]
    assert 0 < a[0] < 1.5
    assert a[-1] == pytest.approx(1.5, abs=1e-6)
    assert LaggedActuator(M3).step(0.5, 0.01) == 1.5


scales = st.floats(0.5, 8.0)


@given(scales, st.floats(-1.0, 1.0))
def test_matched_chain_is_identity(scale, frac):
    m = ActuatorModel(cmd_scale=scale, resp_scale=scale)
    control = frac * scale
    assert gb2accel(compute_gb(control, 0.0, m), m) == pytest.approx(control, rel=1e-12, abs=1e-12)


@given(scales, scales, st.floats(0.01, 0.99))
def test_overshoot_classification(cmd, resp, frac):
    m = ActuatorModel(cmd_scale=cmd, resp_scale=resp)
    control = frac * cmd
    a = gb2accel(compute_gb(control, 0.0, m), m)
    assert (a > control) == (resp > cmd)


@given(scales, st.floats(-100, 100))
def test_gb_within_unit_range(cmd, control):
    assert -1.0 <= compute_gb(control, 0.0, ActuatorModel(cmd_scale=cmd)) <= 1.0
