"""Traffic agent controllers and the constant-velocity forecaster."""
from __future__ import annotations

import numpy as np

from ..dynamics import Action, action_from_index
from ..engine import World, build_observation, expert_replay_step
from ..reward import profile
from .idm import IdmParams, idm_agent_step
from .policy import HeuristicPolicy, HeuristicWeights

__all__ = [
    "ConstantVelocityTraffic",
    "ExpertTraffic",
    "HeuristicTraffic",
    "IdmTraffic",
    "NoTraffic",
    "constant_velocity_forecast",
    "expert_replay_step",
]


def constant_velocity_forecast(world: World, horizon_steps: int) -> np.ndarray:
    """Poses of every agent for steps 1..H at frozen speed and heading.

    Returns shape (H, N, 4) with columns x, y, heading, speed. Dead agents
    keep their last pose; callers mask them with ``world.alive``.
    """
    if horizon_steps < 1:
        raise ValueError("forecast horizon must be at least 1 step")
    t = (np.arange(1, horizon_steps + 1) * world.dt)[:, None]
    vx = world.speed * np.cos(world.heading)
    vy = world.speed * np.sin(world.heading)
    moving = world.alive.astype(float)
    out = np.empty((horizon_steps, world.n_agents, 4))
    out[:, :, 0] = world.x + vx * moving * t
    out[:, :, 1] = world.y + vy * moving * t
    out[:, :, 2] = world.heading
    out[:, :, 3] = world.speed
    return out


class _Base:
    replays_log = False

    def reset(self, world: World, seed: int) -> None:
        pass


class IdmTraffic(_Base):
    name = "idm"

    def __init__(self, params: IdmParams | None = None):
        self.params = params or IdmParams()

    def act(self, world: World, index: int) -> Action:
        return idm_agent_step(world, index, self.params)


class ExpertTraffic(_Base):
    """Open-loop log replay for every non-ego agent (handled by the engine)."""

    name = "expert"
    replays_log = True

    def act(self, world: World, index: int) -> Action:
        raise RuntimeError("expert traffic replays logs and never produces actions")


class ConstantVelocityTraffic(_Base):
    name = "cv"

    def act(self, world: World, index: int) -> Action:
        return Action(0.0, 0.0)


class NoTraffic(_Base):
    """Keeps other agents in place; useful for isolated planner tests."""

    name = "none"

    def act(self, world: World, index: int) -> Action:
        return Action(-world.grid.accel_bounds[1], 0.0)


class HeuristicTraffic(_Base):
    """Heuristic policy per agent, optionally conditioned on a behavior profile.

    ``profile_name`` may be one of the conditioned profiles or ``"mix"``,
    which assigns aggressive/normal/cautious per agent from the episode seed.
    """

    MIX = ("aggressive", "normal", "cautious")

    def __init__(self, profile_name: str | None = None):
        self.profile_name = profile_name
        self.name = "heuristic" if profile_name is None else f"heuristic:{profile_name}"
        if profile_name is not None and profile_name != "mix":
            profile(profile_name)
        self._assign: dict[int, str | None] = {}
        self._policies: dict[str | None, HeuristicPolicy] = {}

    def reset(self, world: World, seed: int) -> None:
        rng = np.random.default_rng(seed)
        self._assign = {}
        for i in range(world.n_agents):
            if self.profile_name == "mix":
                self._assign[i] = self.MIX[int(rng.integers(len(self.MIX)))]
            else:
                self._assign[i] = self.profile_name
        self._policies = {}
        for name in set(self._assign.values()):
            weights = HeuristicWeights() if name is None else HeuristicWeights.from_conditioning(profile(name)[0])
            self._policies[name] = HeuristicPolicy(world.grid, world.dt, weights)
        self._cond = {
            name: (None if name is None else profile(name)[0].as_array()) for name in self._policies
        }

    def act(self, world: World, index: int) -> Action:
        name = self._assign[index]
        obs = build_observation(world, index, self._cond[name])
        best = self._policies[name].rank(obs).indices[0]
        return action_from_index(world.grid, best)
