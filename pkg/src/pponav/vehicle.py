"""Kinematic vehicle model: discrete command set and exact arc integration.

The platform tracks commanded forward velocity and yaw rate fast enough that
the planner-level model is a unicycle: within one control period both values
are held constant, so the pose moves along a circular arc (or a straight
line at zero yaw rate).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

FORWARD_VELOCITIES = (0.0, 1.0, 2.0)
YAW_RATES = (-math.pi / 2, -math.pi / 4, 0.0, math.pi / 4, math.pi / 2)
N_ACTIONS = len(FORWARD_VELOCITIES) * len(YAW_RATES)

# Below this commanded yaw rate the arc update is numerically degenerate and
# the pose advances along a straight line instead.
_STRAIGHT_OMEGA = 1e-9


@dataclass(frozen=True)
class VehicleState:
    """Planar pose: position in metres, yaw in radians within (-pi, pi]."""

    x: float
    y: float
    yaw: float


@dataclass(frozen=True)
class Command:
    forward_velocity: float
    yaw_rate: float


def wrap_angle(angle: float) -> float:
    """Wrap to the half-open interval (-pi, pi]."""
    wrapped = (angle + math.pi) % (2.0 * math.pi) - math.pi
    return math.pi if wrapped == -math.pi else wrapped


def decode_action(index: int) -> Command:
    """Map a flat action index to a command.

    The index enumerates the velocity x yaw-rate grid with yaw rate varying
    fastest: ``index // 5`` selects the forward velocity, ``index % 5`` the
    yaw rate.
    """
    if not 0 <= index < N_ACTIONS:
        raise ValueError(f"action index must be in [0, {N_ACTIONS}), got {index}")
    return Command(FORWARD_VELOCITIES[index // len(YAW_RATES)],
                   YAW_RATES[index % len(YAW_RATES)])


def encode_command(command: Command) -> int:
    """Inverse of :func:`decode_action` for commands on the grid."""
    vi = FORWARD_VELOCITIES.index(command.forward_velocity)
    wi = YAW_RATES.index(command.yaw_rate)
    return vi * len(YAW_RATES) + wi


def integrate(state: VehicleState, command: Command, dt: float) -> VehicleState:
    """Advance the pose by ``dt`` seconds of constant-twist motion.

    Closed-form circular-arc update; no per-substep discretization error.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    v, omega = command.forward_velocity, command.yaw_rate
    yaw = state.yaw
    if abs(omega) < _STRAIGHT_OMEGA:
        x = state.x + v * dt * math.cos(yaw)
        y = state.y + v * dt * math.sin(yaw)
        return VehicleState(x, y, yaw)
    r = v / omega
    new_yaw = yaw + omega * dt
    x = state.x + r * (math.sin(new_yaw) - math.sin(yaw))
    y = state.y + r * (math.cos(yaw) - math.cos(new_yaw))
    return VehicleState(x, y, wrap_angle(new_yaw))
