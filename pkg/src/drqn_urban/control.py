"""High-level behavior -> desired speed -> PID acceleration -> throttle/brake."""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum

from .config import ControlConfig


class Action(IntEnum):
    ACCELERATE = 0
    SLOW_DOWN = 1
    BRAKE = 2
    STEER = 3


@dataclass(frozen=True)
class PidState:
    kp: float = 1.0
    ki: float = 0.1
    kd: float = 0.05
    clamp: float = 2.0
    band: float = 1.5  # integrate only while |error| < band (m/s)
    integral: float = 0.0
    prev_error: float = 0.0

    @classmethod
    def from_config(cls, cfg: ControlConfig):
        return cls(cfg.kp, cfg.ki, cfg.kd, cfg.integral_clamp, cfg.integral_band)


def apply_action(action, v_d, step=1.0 / 3.6, ceiling=20.0 / 3.6):
    """New desired speed (m/s). Braking leaves it untouched; the brake
    command bypasses the PID loop instead."""
    action = Action(action)
    if action == Action.ACCELERATE:
        v_d = v_d + step
    elif action == Action.SLOW_DOWN:
        v_d = v_d - step
    return min(max(v_d, 0.0), ceiling)


def pid_acceleration(v_d, v, state: PidState, dt):
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    e = v_d - v
    integral = state.integral
    # large errors saturate the actuator anyway; integrating them only winds up
    if abs(e) < state.band:
        integral = min(max(integral + state.ki * e * dt, -state.clamp), state.clamp)
    derivative = state.kd * (e - state.prev_error) / dt
    u = state.kp * e + integral + derivative
    return u, replace(state, integral=integral, prev_error=e)


def pid_to_actuation(action, u, a_max=3.0, b_max=6.0):
    """(throttle, brake), each in [0, 1] and never both nonzero."""
    if Action(action) == Action.BRAKE:
        return 0.0, 1.0
    if u >= 0:
        return min(u / a_max, 1.0), 0.0
    return 0.0, min(-u / b_max, 1.0)
