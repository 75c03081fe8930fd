"""Kinematic bicycle integration and the discrete acceleration/steering grid."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import wrap_angle

DEFAULT_ACCEL_RANGE = (-4.0, 4.0)
DEFAULT_STEER_RANGE = (-0.7, 0.7)
WHEELBASE_RATIO = 0.8


class AgentKind(str, enum.Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    CYCLIST = "cyclist"

    @property
    def is_vru(self) -> bool:
        return self is not AgentKind.VEHICLE


class Terminal(str, enum.Enum):
    GOAL_REACHED = "goal_reached"
    COLLIDED = "collided"
    OFF_ROAD = "off_road"
    EXPIRED = "expired"


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    heading: float
    speed: float
    length: float
    width: float
    alive: bool = True
    terminal: Terminal | None = None
    kind: AgentKind = AgentKind.VEHICLE

    def __post_init__(self):
        if self.alive == (self.terminal is not None):
            raise ValueError("alive must be False exactly when a terminal is set")

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Action:
    acceleration: float
    steering: float


class IndexOutOfRange(IndexError):
    pass


@dataclass(frozen=True)
class ActionGrid:
    """Cartesian product of accelerations and steering angles, acceleration-major."""

    accelerations: tuple[float, ...]
    steerings: tuple[float, ...]

    def __post_init__(self):
        for name, vals in (("accelerations", self.accelerations), ("steerings", self.steerings)):
            arr = np.asarray(vals, dtype=float)
            if arr.ndim != 1 or len(arr) < 1:
                raise ValueError(f"{name} must be a non-empty sequence")
            if np.any(np.diff(arr) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
            if not np.allclose(arr, -arr[::-1], atol=1e-12):
                raise ValueError(f"{name} must be symmetric about 0")

    @classmethod
    def uniform(
        cls,
        accel_range: tuple[float, float] = DEFAULT_ACCEL_RANGE,
        steer_range: tuple[float, float] = DEFAULT_STEER_RANGE,
        n_accel: int = 7,
        n_steer: int = 13,
    ) -> "ActionGrid":
        if accel_range[0] != -accel_range[1] or steer_range[0] != -steer_range[1]:
            raise ValueError("grid ranges must be symmetric about 0")
        acc = np.linspace(accel_range[0], accel_range[1], n_accel)
        steer = np.linspace(steer_range[0], steer_range[1], n_steer)
        # linspace is symmetric only up to round-off; mirror it exactly
        acc = 0.5 * (acc - acc[::-1])
        steer = 0.5 * (steer - steer[::-1])
        return cls(tuple(float(a) for a in acc), tuple(float(s) for s in steer))

    def __len__(self) -> int:
        return len(self.accelerations) * len(self.steerings)

    @property
    def accel_bounds(self) -> tuple[float, float]:
        return self.accelerations[0], self.accelerations[-1]

    @property
    def steer_bounds(self) -> tuple[float, float]:
        return self.steerings[0], self.steerings[-1]

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Acceleration and steering for every index, each shape (len(grid),)."""
        acc = np.repeat(np.asarray(self.accelerations), len(self.steerings))
        steer = np.tile(np.asarray(self.steerings), len(self.accelerations))
        return acc, steer

    def clamp(self, action: Action) -> Action:
        lo, hi = self.accel_bounds
        slo, shi = self.steer_bounds
        return Action(min(max(action.acceleration, lo), hi), min(max(action.steering, slo), shi))


def action_from_index(grid: ActionGrid, index: int) -> Action:
    if not 0 <= index < len(grid):
        raise IndexOutOfRange(f"action index {index} outside 0..{len(grid) - 1}")
    i, j = divmod(int(index), len(grid.steerings))
    return Action(grid.accelerations[i], grid.steerings[j])


def index_from_action(grid: ActionGrid, action: Action) -> int:
    i = int(np.argmin(np.abs(np.asarray(grid.accelerations) - action.acceleration)))
    j = int(np.argmin(np.abs(np.asarray(grid.steerings) - action.steering)))
    if abs(grid.accelerations[i] - action.acceleration) > 1e-9 or abs(grid.steerings[j] - action.steering) > 1e-9:
        raise ValueError(f"{action} is not a grid action")
    return i * len(grid.steerings) + j


def step_bicycle(
    state: AgentState,
    action: Action,
    dt: float,
    wheelbase: float,
    v_min: float = 0.0,
    v_max: float = 40.0,
) -> AgentState:
    """Advance one rear-axle kinematic bicycle step (speed first, then pose)."""
    v = min(max(state.speed + action.acceleration * dt, v_min), v_max)
    x = state.x + v * math.cos(state.heading) * dt
    y = state.y + v * math.sin(state.heading) * dt
    heading = wrap_angle(state.heading + v / wheelbase * math.tan(action.steering) * dt)
    return replace(state, x=x, y=y, heading=heading, speed=v)


def step_bicycle_arrays(x, y, heading, speed, accel, steering, dt, wheelbase, v_min=0.0, v_max=40.0):
    """Vectorized :func:`step_bicycle`; returns new (x, y, heading, speed) arrays."""
    v = np.minimum(np.maximum(speed + accel * dt, v_min), v_max)
    nx = x + v * np.cos(heading) * dt
    ny = y + v * np.sin(heading) * dt
    nh = wrap_angle(heading + v / wheelbase * np.tan(steering) * dt)
    return nx, ny, nh, v
