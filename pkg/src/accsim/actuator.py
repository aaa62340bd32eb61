"""Control-to-pedal and pedal-to-acceleration maps.

``compute_gb`` treats the control input as a desired acceleration and
divides by ``cmd_scale``; ``gb2accel`` multiplies the pedal command by
``resp_scale``. Equal scales give a matched ("perfect") chain, a larger
response scale an overshooting actuator, a smaller one an undershooting
actuator.
"""
from __future__ import annotations

import numpy as np

from .core import ActuatorModel, gain_at


def compute_gb(control: float, v_ego: float, m: ActuatorModel) -> float:
    # v_ego only matters when cmd_scale is a speed schedule
    gb = control / gain_at(m.cmd_scale, v_ego)
    return min(1.0, max(-1.0, gb))


def gb2accel(gb: float, m: ActuatorModel) -> float:
    return m.resp_scale * gb


class LaggedActuator:
    """``gb2accel`` followed by a first-order lag with time constant ``m.lag``."""

    def __init__(self, m: ActuatorModel, a0: float = 0.0):
        self.model = m
        self.a = a0

    def step(self, gb: float, dt: float) -> float:
        target = gb2accel(gb, self.model)
        if self.model.lag <= 0:
            self.a = target
        else:
            self.a += (target - self.a) * (1.0 - np.exp(-dt / self.model.lag))
        return self.a
