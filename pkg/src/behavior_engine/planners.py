"""Ego planners: IDM, rule-based IDM proposals (PDM) and the PDM+policy hybrid.

The hybrid planner delegates to PDM whenever some proposal has a positive
score. Only when every proposal is infeasible does it ask the policy for its
top-K actions, roll each one out under the same constant-velocity forecast
and keep the best-scoring rollout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import idm_rollouts
from .dynamics import Action, action_from_index, step_bicycle_arrays
from .engine import PlannerDecision, World, build_observation
from .geometry import NoLaneError, obb_overlap_arrays
from .metrics import (
    ACCEL_LIMIT,
    CENTER_REF,
    JERK_LIMIT,
    alignment_from_errors,
    centering_from_offsets,
    comfort_from_arrays,
)
from .traffic.agents import constant_velocity_forecast
from .traffic.idm import (
    GAP_EPS,
    LEADER_CORRIDOR,
    IdmParams,
    goal_arrival_speed,
    goal_capped_speed,
    idm_agent_step,
    select_lane,
)
from .traffic.policy import Policy

PROGRESS_W = 0.5
COMFORT_W = 0.3
CENTER_W = 0.2


@dataclass(frozen=True)
class HybridConfig:
    h1_steps: int = 40
    h2_steps: int = 10
    k: int = 8
    proposal_count: int = 15
    min_speed_limit: float = 15.0
    progress_ratio: float = 0.5
    idm: IdmParams = field(default_factory=IdmParams)

    def __post_init__(self):
        if not 1 <= self.k <= 91:
            raise ValueError("k must be in 1..91")
        if self.h1_steps < 1 or self.h2_steps < 1:
            raise ValueError("rollout horizons must be at least 1 step")
        if self.proposal_count < 1:
            raise ValueError("proposal_count must be at least 1")


@dataclass(frozen=True)
class Proposal:
    """One candidate ego trajectory: rows of (x, y, heading, speed) per step."""

    trajectory: np.ndarray
    kind: str
    parameter: float
    score: float
    first_action: Action
    safe: bool = True
    soft_score: float = 0.0

    def decision(self) -> PlannerDecision:
        index = int(self.parameter) if self.kind == "policy" else None
        return PlannerDecision(
            action=self.first_action,
            score=float(self.score),
            source=f"{self.kind}:{self.parameter:g}",
            action_index=index,
            trajectory=tuple(tuple(float(v) for v in row) for row in self.trajectory),
        )


def speed_limit(world: World, cfg: HybridConfig) -> float:
    logged = max(s.speed for s in world.scenario.agents[world.ego].logged_states)
    return max(logged, cfg.min_speed_limit)


def target_ladder(world: World, cfg: HybridConfig) -> np.ndarray:
    return np.linspace(0.0, speed_limit(world, cfg), cfg.proposal_count)


def _others(world: World) -> np.ndarray:
    idx = np.flatnonzero(world.alive)
    return idx[idx != world.ego]


def _forecast_overlap(world: World, traj: np.ndarray, forecast: np.ndarray, others: np.ndarray) -> np.ndarray:
    """Per-candidate flag: any overlap with the forecast agents. traj (C, H, 4), forecast (>=H, N, 4)."""
    c, h = traj.shape[:2]
    if not len(others):
        return np.zeros(c, dtype=bool)
    e = world.ego
    y = forecast[:h][:, others]  # (H, M, 4)
    ex, ey, eh = traj[..., 0][..., None], traj[..., 1][..., None], traj[..., 2][..., None]
    hit = obb_overlap_arrays(
        ex, ey, eh, 0.5 * world.length[e], 0.5 * world.width[e],
        y[None, ..., 0], y[None, ..., 1], y[None, ..., 2], 0.5 * world.length[others], 0.5 * world.width[others],
    )
    return hit.any(axis=(1, 2))


def _edge_crossing(world: World, traj: np.ndarray) -> np.ndarray:
    c, h = traj.shape[:2]
    e = world.ego
    flat = traj.reshape(-1, 4)
    hit = world.map.boxes_cross_edges(
        flat[:, 0], flat[:, 1], flat[:, 2], 0.5 * world.length[e], 0.5 * world.width[e]
    )
    return hit.reshape(c, h).any(axis=1)


def _motion_profile(traj: np.ndarray, steer: np.ndarray, v_start: float, wheelbase: float, dt: float):
    """Long/lat accelerations and jerks of rollouts; traj (C, H, 4), steer (C, H)."""
    v = traj[..., 3]
    prev = np.concatenate([np.full((len(v), 1), v_start), v[:, :-1]], axis=1)
    a_long = (v - prev) / dt
    a_lat = v * v * np.tan(steer) / wheelbase
    acc = np.stack([a_long, a_lat], axis=-1)
    jerk = np.zeros_like(acc)
    jerk[:, 1:] = np.diff(acc, axis=1) / dt
    return acc, jerk


def _free_road_progress(v: float, v0: float, distance_to_goal: float, world: World, cfg: HybridConfig) -> float:
    """Distance an unobstructed IDM vehicle would cover over the proposal horizon."""
    p = cfg.idm
    lo, hi = world.grid.accel_bounds
    travelled = 0.0
    for _ in range(cfg.h1_steps):
        remaining = max(distance_to_goal - travelled, 0.0)
        target = max(float(goal_capped_speed(v0, remaining, world.goal.max_speed, p.b, world.goal.radius)), GAP_EPS)
        a = min(max(p.a * (1.0 - (v / target) ** p.delta), lo), hi)
        v = min(max(v + a * world.dt, world.config.v_min), world.config.v_max)
        travelled += v * world.dt
    return travelled


def pdm_proposals(world: World, cfg: HybridConfig = HybridConfig(), forecast: np.ndarray | None = None) -> list[Proposal]:
    """IDM rollouts along the ego lane at every target speed of the ladder, scored.

    A proposal scores 0 if it overlaps a forecast agent, crosses a road edge
    or makes too little progress (less than ``progress_ratio`` of what a
    free-road IDM vehicle would cover, unless it reaches the goal). Otherwise
    the score mixes normalized progress, comfort and lane centering.
    """
    e = world.ego
    p = cfg.idm
    dt = world.dt
    x0, y0, h0, v0 = float(world.x[e]), float(world.y[e]), float(world.heading[e]), float(world.speed[e])
    targets = target_ladder(world, cfg)
    vlim = speed_limit(world, cfg)
    n = len(targets)
    gx, gy = world.goal.position
    if forecast is None:
        forecast = constant_velocity_forecast(world, cfg.h1_steps)
    try:
        lane = world.map.lane_path(select_lane(world.map, x0, y0, h0, (gx, gy)))
    except NoLaneError:
        traj = np.tile([x0, y0, h0, v0], (n, cfg.h1_steps, 1))
        brake = world.grid.clamp(Action(world.grid.accel_bounds[0], 0.0))
        return [Proposal(traj[i], "idm", float(t), 0.0, brake, False) for i, t in enumerate(targets)]

    others = _others(world)
    m = len(others)
    # agents at rollout step k: current world for k = 0, then the forecast
    now = world.pose_array()[None, others]
    agents = np.concatenate([now, forecast[: cfg.h1_steps - 1, others]], axis=0)  # (H1, M, 4)
    if m:
        a_arc, a_lat, _, a_dir = lane.project(agents[..., 0].ravel(), agents[..., 1].ravel())
        a_arc = np.ascontiguousarray(a_arc.reshape(cfg.h1_steps, m))
        in_corridor = np.abs(a_lat.reshape(cfg.h1_steps, m)) <= LEADER_CORRIDOR
        a_vlong = np.ascontiguousarray(agents[..., 3] * np.cos(agents[..., 2] - a_dir.reshape(cfg.h1_steps, m)))
    else:
        a_arc = np.zeros((cfg.h1_steps, 0))
        in_corridor = np.zeros((cfg.h1_steps, 0), dtype=bool)
        a_vlong = np.zeros((cfg.h1_steps, 0))
    half_len = 0.5 * world.length[e]
    o_half = 0.5 * world.length[others]
    lo, hi = world.grid.accel_bounds
    slo, shi = world.grid.steer_bounds
    wheelbase = float(world.wheelbase[e])
    traj, steers, first = idm_rollouts(
        x0, y0, h0, v0, targets, float(gx), float(gy), goal_arrival_speed(world.goal.max_speed), float(world.goal.radius),
        p.a, p.b, p.s0, p.T, p.delta,
        lane.p0x, lane.p0y, lane.ex, lane.ey, lane.seglen, lane.cum,
        a_arc, in_corridor, a_vlong,
        np.ascontiguousarray(agents[..., 0]), np.ascontiguousarray(agents[..., 1]),
        float(half_len), np.ascontiguousarray(o_half, dtype=float),
        float(lo), float(hi), float(slo), float(shi), wheelbase, float(dt),
        float(world.config.v_min), float(world.config.v_max), cfg.h1_steps,
    )
    arc_start = float(lane.project(x0, y0)[0][0])
    arc, lat, _, _ = lane.project(traj[..., 0].ravel(), traj[..., 1].ravel())
    lateral = lat.reshape(n, cfg.h1_steps)
    progress = arc.reshape(n, cfg.h1_steps)[:, -1] - arc_start

    collide = _forecast_overlap(world, traj, forecast, others)
    off = _edge_crossing(world, traj)
    dg = np.hypot(traj[..., 0] - gx, traj[..., 1] - gy)
    reaches = ((dg < world.goal.radius) & (traj[..., 3] < world.goal.max_speed)).any(axis=1)
    reference = _free_road_progress(v0, vlim, math.hypot(gx - x0, gy - y0), world, cfg)
    enough = (progress > 0.0) & ((progress >= cfg.progress_ratio * reference) | reaches)

    acc_prof, jerk_prof = _motion_profile(traj, steers, v0, wheelbase, dt)
    norm = vlim * cfg.h1_steps * dt
    violations = (
        (np.abs(acc_prof[..., 0]) > ACCEL_LIMIT).sum(axis=1)
        + (np.abs(acc_prof[..., 1]) > ACCEL_LIMIT).sum(axis=1)
        + (np.abs(jerk_prof).max(axis=2) > JERK_LIMIT).sum(axis=1)
    )
    comfort = 1.0 - np.minimum(violations / (3.0 * cfg.h1_steps), 1.0)
    centering = 1.0 - np.minimum(np.abs(lateral).mean(axis=1) / CENTER_REF, 1.0)
    soft = PROGRESS_W * np.clip(progress / norm, 0.0, 1.0) + COMFORT_W * comfort + CENTER_W * centering
    safe = ~(collide | off)
    score = np.where(safe & enough, soft, 0.0)
    return [
        Proposal(traj[i], "idm", float(targets[i]), float(score[i]), Action(float(first[i, 0]), float(first[i, 1])),
                 bool(safe[i]), float(soft[i]))
        for i in range(n)
    ]


def best_proposal(proposals: list[Proposal]) -> Proposal:
    """Highest score; the first one wins ties."""
    return max(enumerate(proposals), key=lambda ip: (ip[1].score, -ip[0]))[1]


def rollout_actions(world: World, indices, steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Hold each grid action for ``steps`` steps from the ego state.

    Returns trajectories (K, steps, 4) and the steering per step (K, steps).
    """
    e = world.ego
    acts = [action_from_index(world.grid, int(i)) for i in indices]
    acc = np.array([a.acceleration for a in acts])
    steer = np.array([a.steering for a in acts])
    k = len(acts)
    x = np.full(k, world.x[e])
    y = np.full(k, world.y[e])
    h = np.full(k, world.heading[e])
    v = np.full(k, world.speed[e])
    traj = np.empty((k, steps, 4))
    for t in range(steps):
        x, y, h, v = step_bicycle_arrays(
            x, y, h, v, acc, steer, world.dt, world.wheelbase[e], world.config.v_min, world.config.v_max
        )
        traj[:, t] = np.stack([x, y, h, v], axis=1)
    return traj, np.repeat(steer[:, None], steps, axis=1)


def score_rollouts(world: World, traj: np.ndarray, steer: np.ndarray, forecast: np.ndarray, cfg: HybridConfig) -> np.ndarray:
    """Benchmark-style score of short rollouts under the forecast.

    Collision and road-edge gates times an even mix of goal progress and the
    weighted comfort/alignment/centering behavior score.
    """
    e = world.ego
    others = _others(world)
    collide = _forecast_overlap(world, traj, forecast, others)
    off = _edge_crossing(world, traj)
    gx, gy = world.goal.position
    d0 = math.hypot(gx - world.x[e], gy - world.y[e])
    d_end = np.hypot(gx - traj[:, -1, 0], gy - traj[:, -1, 1])
    norm = speed_limit(world, cfg) * traj.shape[1] * world.dt
    progress = np.clip((d0 - d_end) / norm, 0.0, 1.0)
    acc, jerk = _motion_profile(traj, steer, float(world.speed[e]), float(world.wheelbase[e]), world.dt)
    k, h = traj.shape[:2]
    flat = traj.reshape(-1, 4)
    try:
        lat, herr, _ = world.map.frenet_arrays(flat[:, 0], flat[:, 1], flat[:, 2])
        lat = lat.reshape(k, h)
        herr = herr.reshape(k, h)
        have_lanes = True
    except NoLaneError:
        have_lanes = False
    scores = np.empty(k)
    for i in range(k):
        cmf = comfort_from_arrays(acc[i], jerk[i])
        align = alignment_from_errors(herr[i]) if have_lanes else 0.0
        ctr = centering_from_offsets(lat[i]) if have_lanes else 0.0
        behavior = 0.2 * cmf + 0.5 * align + 0.3 * ctr
        gate = (not collide[i]) and (not off[i])
        scores[i] = float(gate) * (0.5 * progress[i] + 0.5 * behavior)
    return scores


def policy_fallback(
    world: World, policy: Policy, cfg: HybridConfig, forecast: np.ndarray, conditioning=None
) -> list[Proposal]:
    """Top-K policy actions, each rolled out and scored; in policy rank order."""
    ranked = policy.rank(build_observation(world, world.ego, conditioning))
    top = ranked.top(cfg.k)
    traj, steer = rollout_actions(world, top, cfg.h2_steps)
    scores = score_rollouts(world, traj, steer, forecast, cfg)
    return [
        Proposal(traj[i], "policy", float(idx), float(scores[i]), action_from_index(world.grid, idx))
        for i, idx in enumerate(top)
    ]


class PdmPlanner:
    """Rule-based planner; when every proposal scores 0 it keeps the best safe one (else brakes)."""

    name = "pdm"

    def __init__(self, cfg: HybridConfig | None = None):
        self.cfg = cfg or HybridConfig()
        self.last_proposals: list[Proposal] = []

    def reset(self, world: World, seed: int) -> None:
        self.last_proposals = []

    def plan(self, world: World, index: int) -> PlannerDecision:
        props = pdm_proposals(world, self.cfg)
        self.last_proposals = props
        best = best_proposal(props)
        if best.score > 0.0:
            return best.decision()
        safe = [pr for pr in props if pr.safe]
        if safe:
            pick = max(enumerate(safe), key=lambda ip: (ip[1].soft_score, -ip[0]))[1]
            return PlannerDecision(pick.first_action, 0.0, f"pdm-fallback:{pick.parameter:g}")
        brake = world.grid.clamp(Action(world.grid.accel_bounds[0], 0.0))
        return PlannerDecision(brake, 0.0, "pdm-brake")


class HybridPlanner:
    """PDM first; the policy's top-K rollouts only when no proposal is feasible."""

    def __init__(self, policy: Policy, cfg: HybridConfig | None = None, conditioning=None):
        self.policy = policy
        self.cfg = cfg or HybridConfig()
        self.conditioning = conditioning
        self.name = f"hybrid:{policy.name}"
        self.last_proposals: list[Proposal] = []
        self.last_fallback: list[Proposal] = []

    def reset(self, world: World, seed: int) -> None:
        self.last_proposals = []
        self.last_fallback = []

    def plan(self, world: World, index: int) -> PlannerDecision:
        forecast = constant_velocity_forecast(world, self.cfg.h1_steps)
        props = pdm_proposals(world, self.cfg, forecast)
        self.last_proposals = props
        self.last_fallback = []
        best = best_proposal(props)
        if best.score > 0.0:
            return best.decision()
        fallback = policy_fallback(world, self.policy, self.cfg, forecast[: self.cfg.h2_steps], self.conditioning)
        self.last_fallback = fallback
        return best_proposal(fallback).decision()


class IdmPlanner:
    """Single IDM step for the ego, slowing down for the goal speed limit."""

    name = "idm"

    def __init__(self, params: IdmParams | None = None):
        self.params = params or IdmParams()

    def reset(self, world: World, seed: int) -> None:
        pass

    def plan(self, world: World, index: int) -> PlannerDecision:
        return PlannerDecision(idm_agent_step(world, index, self.params, goal_speed_cap=True), 0.0, "idm")


class PolicyPlanner:
    """Executes the policy's top-ranked action."""

    def __init__(self, policy: Policy, conditioning=None):
        self.policy = policy
        self.conditioning = conditioning
        self.name = f"policy:{policy.name}"

    def reset(self, world: World, seed: int) -> None:
        pass

    def plan(self, world: World, index: int) -> PlannerDecision:
        ranked = self.policy.rank(build_observation(world, index, self.conditioning))
        idx = ranked.indices[0]
        return PlannerDecision(action_from_index(world.grid, idx), ranked.scores[0], f"policy:{idx}", idx)
