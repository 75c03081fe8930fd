"""Per-step conditioned driving reward, coefficient sampling and fixed profiles."""
from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np


class UnknownProfile(KeyError):
    pass


@dataclass(frozen=True)
class ConditioningVector:
    """Ten per-agent reward coefficients; ``v_goal`` in m/s, ``delta_goal`` in m."""

    v_goal: float
    delta_goal: float
    collision: float
    boundary: float
    comfort: float
    l_align: float
    vel_align: float
    l_center: float
    center_bias: float
    reverse: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> "ConditioningVector":
        return cls(*(float(v) for v in values))

    @classmethod
    def from_dict(cls, doc: dict) -> "ConditioningVector":
        names = [f.name for f in fields(cls)]
        unknown = set(doc) - set(names)
        if unknown:
            raise KeyError(f"unknown coefficient(s): {sorted(unknown)}")
        missing = [n for n in names if n not in doc]
        if missing:
            raise KeyError(f"missing coefficient(s): {missing}")
        return cls(**{n: float(doc[n]) for n in names})


@dataclass(frozen=True)
class RewardConstants:
    """Coefficients shared by every agent and never conditioned."""

    velocity: float = 2.5e-3
    timestep: float = 2.5e-5


# training-time sampling range of each conditioning coefficient
SAMPLING_RANGES: dict[str, tuple[float, float]] = {
    "v_goal": (3.0, 30.0),
    "delta_goal": (2.0, 12.0),
    "collision": (0.0, 3.0),
    "boundary": (0.0, 3.0),
    "comfort": (0.0, 0.1),
    "l_align": (2.5e-4, 2.5e-2),
    "vel_align": (0.0, 1.0),
    "l_center": (2.5e-4, 7.5e-3),
    "center_bias": (-0.5, 0.5),
    "reverse": (2.5e-4, 7.5e-3),
}

_PROFILES = {
    "aggressive": ConditioningVector(30.0, 2.0, 0.2, 0.2, 0.0, 1.0e-3, 0.1, 2.5e-4, 0.0, 2.5e-4),
    "normal": ConditioningVector(20.0, 2.0, 3.0, 3.0, 0.05, 1.5e-2, 0.5, 3.8e-3, 0.0, 3.8e-3),
    "cautious": ConditioningVector(5.0, 2.0, 3.0, 3.0, 0.1, 2.5e-2, 1.0, 7.5e-3, 0.5, 7.5e-3),
    "simple": ConditioningVector(100.0, 2.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    "complex": ConditioningVector(100.0, 2.0, 3.0, 3.0, 0.05, 0.025, 1.0, 0.0038, 0.0, 0.005),
}
_CONSTANTS = {
    "simple": RewardConstants(velocity=0.0, timestep=0.0),
    "complex": RewardConstants(velocity=0.0025, timestep=2.5e-5),
}
PROFILE_NAMES = tuple(_PROFILES)


def profile(name: str) -> tuple[ConditioningVector, RewardConstants]:
    """Fixed coefficients of a named behavior (conditioned or baseline)."""
    if name not in _PROFILES:
        raise UnknownProfile(f"unknown profile {name!r}; expected one of {', '.join(PROFILE_NAMES)}")
    return _PROFILES[name], _CONSTANTS.get(name, RewardConstants())


def sample_conditioning(rng: np.random.Generator) -> ConditioningVector:
    return ConditioningVector(*(float(rng.uniform(lo, hi)) for lo, hi in SAMPLING_RANGES.values()))


def normalize_conditioning(c: ConditioningVector) -> np.ndarray:
    """Map each coefficient affinely from its sampling range onto [-1, 1]."""
    lo, hi = np.array(list(SAMPLING_RANGES.values())).T
    return (2.0 * c.as_array() - lo - hi) / (hi - lo)


def denormalize_conditioning(u) -> ConditioningVector:
    lo, hi = np.array(list(SAMPLING_RANGES.values())).T
    u = np.asarray(u, dtype=float)
    return ConditioningVector.from_array(((1.0 - u) * lo + (1.0 + u) * hi) / 2.0)


@dataclass(frozen=True)
class StepContext:
    """Everything one reward evaluation needs about an agent at one step.

    ``lateral_offset`` and ``heading_error`` are relative to the nearest lane
    centerline; ``goal_distance`` is the distance to the agent's goal.
    """

    speed: float
    a_long: float
    a_lat: float
    jerk_long: float
    jerk_lat: float
    lateral_offset: float
    heading_error: float
    collided: bool
    off_road: bool
    goal_distance: float
    dt: float


@dataclass(frozen=True)
class RewardTerms:
    goal: float
    collision: float
    off_road: float
    comfort: float
    lane_align: float
    lane_center: float
    velocity: float
    reverse: float
    timestep: float

    @property
    def total(self) -> float:
        return (
            self.goal + self.collision + self.off_road + self.comfort + self.lane_align
            + self.lane_center + self.velocity + self.reverse + self.timestep
        )


def reward_terms(ctx: StepContext, c: ConditioningVector, k: RewardConstants = RewardConstants()) -> RewardTerms:
    v = ctx.speed
    dt = ctx.dt
    cos_h = math.cos(ctx.heading_error)
    goal = 1.0 if (ctx.goal_distance < c.delta_goal and abs(v) < c.v_goal) else 0.0
    collision = -(c.collision + 0.1 * abs(v)) * float(ctx.collided)
    off_road = -c.boundary * float(ctx.off_road)
    violations = (
        float(abs(ctx.a_long) > 3.0)
        + float(abs(ctx.a_lat) > 3.0)
        + float(abs(ctx.jerk_long) > 5.0 or abs(ctx.jerk_lat) > 5.0)
    )
    comfort = -c.comfort * violations
    lane_align = c.l_align * dt * (
        min(cos_h, 0.0)
        + c.vel_align * min(cos_h * v, 0.0)
        + 0.0025 * (1.0 - abs(ctx.heading_error) / (math.pi / 2))
    )
    off = abs(ctx.lateral_offset - c.center_bias)
    lane_center = -c.l_center * dt * (float(cos_h > 0.5) * off - 0.05 / math.exp(off - 0.5))
    velocity = k.velocity * dt * max(cos_h, 0.0) * float(abs(v) > 2.5)
    reverse = -c.reverse * dt * float(v < 0.0)
    moving = abs(v) > 0.0 or math.hypot(ctx.a_long, ctx.a_lat) > 0.0
    timestep = -k.timestep * dt * float(moving)
    return RewardTerms(goal, collision, off_road, comfort, lane_align, lane_center, velocity, reverse, timestep)


def compute_reward(ctx: StepContext, c: ConditioningVector, k: RewardConstants = RewardConstants()) -> float:
    """Sum of the nine reward terms for one agent step."""
    return reward_terms(ctx, c, k).total


def episode_contexts(log, map_index, goal) -> list[StepContext]:
    """Ego step contexts for every active step of an episode log."""
    from .dynamics import Terminal

    out = []
    track = log.ego_track()
    for t in range(1, log.steps_alive + 1):
        x, y, h, v = track[t]
        fr = map_index.frenet(x, y, h) if map_index.has_lanes else None
        last = t == log.steps_alive
        term = log.ego_terminal if last else None
        out.append(
            StepContext(
                speed=float(v),
                a_long=float(log.ego_accel[t - 1, 0]),
                a_lat=float(log.ego_accel[t - 1, 1]),
                jerk_long=float(log.ego_jerk[t - 1, 0]),
                jerk_lat=float(log.ego_jerk[t - 1, 1]),
                lateral_offset=fr.lateral_offset if fr else 0.0,
                heading_error=fr.heading_error if fr else 0.0,
                collided=term is Terminal.COLLIDED,
                off_road=term is Terminal.OFF_ROAD,
                goal_distance=math.hypot(x - goal.position[0], y - goal.position[1]),
                dt=log.dt,
            )
        )
    return out


def episode_rewards(log, map_index, goal, c: ConditioningVector, k: RewardConstants = RewardConstants()) -> np.ndarray:
    return np.array([compute_reward(ctx, c, k) for ctx in episode_contexts(log, map_index, goal)])
