"""Closed-loop stepper.

One agent is the ego and is driven by a planner; the other controllable
vehicles are driven by a traffic agent; pedestrians, cyclists and
non-controllable vehicles replay their logs. All controllers read the
step-``t`` world and their actions are applied together to produce step
``t + 1``. Agents that reach a terminal condition are frozen and drop out of
collision checks and observations. The episode ends when the ego terminates
or the horizon is exhausted.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Protocol, Sequence

import numpy as np

from ._geom_kernels import overlapping_pairs
from .dynamics import (
    DEFAULT_ACCEL_RANGE,
    DEFAULT_STEER_RANGE,
    WHEELBASE_RATIO,
    Action,
    ActionGrid,
    AgentKind,
    AgentState,
    Terminal,
    step_bicycle_arrays,
)
from .geometry import Obb, wrap_angle
from .scenario import GoalSpec, Scenario

N_PARTNERS = 31
N_ROADS = 128
EGO_FEATURES = 7
PARTNER_FEATURES = 8
ROAD_FEATURES = 7
DEFAULT_PRECEDENCE = (Terminal.COLLIDED, Terminal.OFF_ROAD, Terminal.GOAL_REACHED)


class ControllerError(RuntimeError):
    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class DeadAgent(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    dt: float | None = None
    horizon_steps: int | None = None
    accel_range: tuple[float, float] = DEFAULT_ACCEL_RANGE
    steer_range: tuple[float, float] = DEFAULT_STEER_RANGE
    n_accel: int = 7
    n_steer: int = 13
    v_max: float = 40.0
    allow_reverse: bool = False
    goal_max_speed: float | None = None
    terminal_precedence: tuple[Terminal, ...] = DEFAULT_PRECEDENCE
    wheelbase_ratio: float = WHEELBASE_RATIO

    def __post_init__(self):
        prec = tuple(Terminal(p) for p in self.terminal_precedence)
        if sorted(p.value for p in prec) != sorted(p.value for p in DEFAULT_PRECEDENCE):
            raise ValueError("terminal_precedence must order collided, off_road and goal_reached")
        object.__setattr__(self, "terminal_precedence", prec)

    @property
    def v_min(self) -> float:
        return -2.0 if self.allow_reverse else 0.0

    def grid(self) -> ActionGrid:
        return ActionGrid.uniform(self.accel_range, self.steer_range, self.n_accel, self.n_steer)


@dataclass(frozen=True, eq=True)
class PlannerDecision:
    """What a planner wants the ego to do this step.

    ``trajectory`` holds the planned (x, y, heading, speed) rows when the
    decision comes from a rollout; ``action_index`` is set for grid actions.
    """

    action: Action
    score: float = 0.0
    source: str = ""
    action_index: int | None = None
    trajectory: tuple[tuple[float, float, float, float], ...] | None = None


class World:
    """Mutable per-episode simulation state (arrays indexed by agent)."""

    def __init__(self, scenario: Scenario, config: EngineConfig | None = None):
        self.scenario = scenario
        self.config = config or EngineConfig()
        self.map = scenario.map_index()
        self.dt = float(self.config.dt or scenario.dt)
        self.horizon = int(self.config.horizon_steps or scenario.horizon_steps)
        self.grid = self.config.grid()
        agents = scenario.agents
        n = len(agents)
        first = [a.logged_states[0] for a in agents]
        self.x = np.array([s.x for s in first], dtype=float)
        self.y = np.array([s.y for s in first], dtype=float)
        self.heading = np.array([s.heading for s in first], dtype=float)
        self.speed = np.array([s.speed for s in first], dtype=float)
        self.length = np.array([a.length for a in agents], dtype=float)
        self.width = np.array([a.width for a in agents], dtype=float)
        self.wheelbase = self.config.wheelbase_ratio * self.length
        self.kinds = tuple(a.kind for a in agents)
        self.is_vru = np.array([k.is_vru for k in self.kinds])
        self.ego = scenario.ego_index
        self.replay = np.array([a.kind.is_vru or not a.controllable for a in agents])
        self.replay[self.ego] = False
        self.alive = np.ones(n, dtype=bool)
        self.terminal: list[Terminal | None] = [None] * n
        self.terminal_step = np.full(n, -1, dtype=int)
        goal = scenario.goal
        if self.config.goal_max_speed is not None:
            goal = replace(goal, max_speed=self.config.goal_max_speed)
        self.goal: GoalSpec = goal
        self.agent_goals = np.array([a.goal_position for a in agents], dtype=float)
        self.agent_goals[self.ego] = goal.position
        start = np.stack([self.x, self.y], axis=1)
        # a track that barely moves has no meaningful destination
        self.has_goal = np.hypot(*(self.agent_goals - start).T) > goal.radius
        self.has_goal[self.ego] = True
        self.t = 0

    @property
    def n_agents(self) -> int:
        return len(self.x)

    def state(self, i: int) -> AgentState:
        return AgentState(
            float(self.x[i]), float(self.y[i]), float(self.heading[i]), float(self.speed[i]),
            float(self.length[i]), float(self.width[i]), bool(self.alive[i]), self.terminal[i], self.kinds[i],
        )

    def box(self, i: int) -> Obb:
        return Obb.from_pose(self.x[i], self.y[i], self.heading[i], self.length[i], self.width[i])

    def goal_of(self, i: int) -> tuple[float, float]:
        return float(self.agent_goals[i, 0]), float(self.agent_goals[i, 1])

    def pose_array(self) -> np.ndarray:
        return np.stack([self.x, self.y, self.heading, self.speed], axis=1)


class Planner(Protocol):
    name: str

    def reset(self, world: World, seed: int) -> None: ...

    def plan(self, world: World, index: int) -> PlannerDecision: ...


class TrafficAgent(Protocol):
    name: str
    replays_log: bool

    def reset(self, world: World, seed: int) -> None: ...

    def act(self, world: World, index: int) -> Action: ...


@dataclass(frozen=True)
class TerminalCheck:
    terminals: dict[int, Terminal]
    collisions: tuple[tuple[int, int], ...]


def colliding_pairs(world: World) -> list[tuple[int, int]]:
    """Overlapping pairs among alive agents; replay-vs-replay contacts are ignored."""
    idx = np.flatnonzero(world.alive)
    if len(idx) < 2:
        return []
    a, b = overlapping_pairs(
        world.x[idx], world.y[idx], world.heading[idx],
        0.5 * world.length[idx], 0.5 * world.width[idx], world.replay[idx],
    )
    return [(int(idx[i]), int(idx[j])) for i, j in zip(a, b)]


def check_terminals(world: World, goal: GoalSpec | None = None) -> TerminalCheck:
    """Terminal conditions of every alive agent in the current world.

    Collided if overlapping any other alive agent, OffRoad if a closed-loop
    agent touches a road edge, GoalReached for the ego when inside the goal
    radius and under the goal speed (other closed-loop agents: inside the
    radius of their final logged position). Simultaneous events resolve by the configured
    precedence.
    """
    goal = goal or world.goal
    flags: dict[int, set[Terminal]] = {}
    pairs = colliding_pairs(world)
    for i, j in pairs:
        flags.setdefault(i, set()).add(Terminal.COLLIDED)
        flags.setdefault(j, set()).add(Terminal.COLLIDED)

    driven = np.flatnonzero(world.alive & ~world.replay)
    if len(driven):
        off = world.map.boxes_cross_edges(
            world.x[driven], world.y[driven], world.heading[driven],
            0.5 * world.length[driven], 0.5 * world.width[driven],
        )
        for i in driven[off]:
            flags.setdefault(int(i), set()).add(Terminal.OFF_ROAD)

    ego = world.ego
    if world.alive[ego]:
        d = math.hypot(world.x[ego] - goal.position[0], world.y[ego] - goal.position[1])
        if d < goal.radius and world.speed[ego] < goal.max_speed:
            flags.setdefault(ego, set()).add(Terminal.GOAL_REACHED)
    # replayed agents follow their log to its end
    others = np.flatnonzero(world.alive & world.has_goal & ~world.replay)
    others = others[others != ego]
    if len(others):
        d = np.hypot(world.x[others] - world.agent_goals[others, 0], world.y[others] - world.agent_goals[others, 1])
        for i in others[d < goal.radius]:
            flags.setdefault(int(i), set()).add(Terminal.GOAL_REACHED)

    out = {}
    for i, fs in flags.items():
        out[i] = next(t for t in world.config.terminal_precedence if t in fs)
    return TerminalCheck(out, tuple(pairs))


def apply_terminals(world: World, check: TerminalCheck) -> None:
    for i, term in check.terminals.items():
        world.alive[i] = False
        world.terminal[i] = term
        world.terminal_step[i] = world.t


def expert_replay_step(world: World, index: int) -> AgentState:
    """Logged state of ``index`` at the next step, or an Expired state when the log runs out."""
    track = world.scenario.agents[index]
    t = world.t + 1
    if t >= len(track.logged_states):
        return replace(world.state(index), alive=False, terminal=Terminal.EXPIRED)
    s = track.logged_states[t]
    return AgentState(s.x, s.y, s.heading, s.speed, track.length, track.width, kind=track.kind)


@dataclass(frozen=True)
class ObservationFrame:
    """Ego-centric features.

    ego: [speed, length, width, goal distance, goal bearing sin, goal bearing
    cos, collision flag]; partners: [rel x, rel y, rel heading sin, rel
    heading cos, speed, length, width, valid]; roads: [rel x, rel y, dir sin,
    dir cos, segment length, is lane, is edge]. Empty slots are all zero.
    """

    ego: np.ndarray
    partners: np.ndarray
    roads: np.ndarray
    conditioning: np.ndarray | None = None
    partner_ids: tuple[int, ...] = ()

    def flatten(self) -> np.ndarray:
        parts = [self.ego, self.partners.ravel(), self.roads.ravel()]
        if self.conditioning is not None:
            parts.append(self.conditioning)
        return np.concatenate(parts)


def to_ego_frame(x, y, heading, ox: float, oy: float, oh: float):
    """Express world poses in the frame of the pose (ox, oy, oh)."""
    c, s = math.cos(oh), math.sin(oh)
    dx = np.asarray(x) - ox
    dy = np.asarray(y) - oy
    return dx * c + dy * s, -dx * s + dy * c, wrap_angle(np.asarray(heading) - oh)


def build_observation(world: World, agent_index: int, conditioning: Sequence[float] | None = None) -> ObservationFrame:
    i = agent_index
    if not world.alive[i]:
        raise DeadAgent(f"agent {i} is not alive")
    ox, oy, oh = float(world.x[i]), float(world.y[i]), float(world.heading[i])
    gx, gy = world.goal_of(i)
    glx, gly, _ = to_ego_frame(gx, gy, 0.0, ox, oy, oh)
    gdist = math.hypot(glx, gly)
    bearing = math.atan2(gly, glx) if gdist > 0 else 0.0
    collided = 1.0 if world.terminal[i] is Terminal.COLLIDED else 0.0
    ego = np.array(
        [world.speed[i], world.length[i], world.width[i], gdist, math.sin(bearing), math.cos(bearing), collided]
    )

    partners = np.zeros((N_PARTNERS, PARTNER_FEATURES))
    others = np.flatnonzero(world.alive)
    others = others[others != i]
    ids: tuple[int, ...] = ()
    if len(others):
        d2 = (world.x[others] - ox) ** 2 + (world.y[others] - oy) ** 2
        order = np.lexsort((others, d2))[:N_PARTNERS]
        sel = others[order]
        ids = tuple(int(j) for j in sel)
        rx, ry, rh = to_ego_frame(world.x[sel], world.y[sel], world.heading[sel], ox, oy, oh)
        k = len(sel)
        partners[:k, 0] = rx
        partners[:k, 1] = ry
        partners[:k, 2] = np.sin(rh)
        partners[:k, 3] = np.cos(rh)
        partners[:k, 4] = world.speed[sel]
        partners[:k, 5] = world.length[sel]
        partners[:k, 6] = world.width[sel]
        partners[:k, 7] = 1.0

    roads = np.zeros((N_ROADS, ROAD_FEATURES))
    m = world.map
    if len(m.midpoint):
        d2 = (m.midpoint[:, 0] - ox) ** 2 + (m.midpoint[:, 1] - oy) ** 2
        if len(d2) > N_ROADS:
            cand = np.argpartition(d2, N_ROADS - 1)[:N_ROADS]
        else:
            cand = np.arange(len(d2))
        sel = cand[np.lexsort((cand, d2[cand]))]
        rx, ry, rd = to_ego_frame(m.midpoint[sel, 0], m.midpoint[sel, 1], m.seg_dir[sel], ox, oy, oh)
        k = len(sel)
        roads[:k, 0] = rx
        roads[:k, 1] = ry
        roads[:k, 2] = np.sin(rd)
        roads[:k, 3] = np.cos(rd)
        roads[:k, 4] = m.seg_len[sel]
        roads[:k, 5] = m.kind[sel] == m.LANE
        roads[:k, 6] = m.kind[sel] == m.EDGE

    cond = None if conditioning is None else np.array(conditioning, dtype=float)
    return ObservationFrame(ego, partners, roads, cond, ids)


@dataclass(frozen=True)
class CollisionEvent:
    step: int
    a: int
    b: int


@dataclass
class EpisodeLog:
    """Everything the metrics need about one episode.

    ``states`` has one frame per step, frame 0 being the initial state; the
    ego's active steps are frames ``1..steps_alive``. Per-step ego arrays
    (actions, accelerations, jerks) have ``steps_alive`` rows.
    """

    scenario_id: str
    dt: float
    ego_index: int
    kinds: tuple[AgentKind, ...]
    lengths: np.ndarray
    widths: np.ndarray
    states: np.ndarray
    alive: np.ndarray
    ego_actions: np.ndarray
    ego_accel: np.ndarray
    ego_jerk: np.ndarray
    collisions: tuple[CollisionEvent, ...]
    terminals: tuple[Terminal | None, ...]
    terminal_steps: np.ndarray
    steps_alive: int
    ego_sources: tuple[str, ...] = ()
    ego_steering: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def ego_terminal(self) -> Terminal | None:
        return self.terminals[self.ego_index]

    def ego_track(self) -> np.ndarray:
        """Ego (x, y, heading, speed) for frames 0..steps_alive."""
        return self.states[: self.steps_alive + 1, self.ego_index]

    def to_bytes(self) -> bytes:
        meta = {
            "scenario_id": self.scenario_id,
            "dt": self.dt,
            "ego_index": self.ego_index,
            "kinds": [k.value for k in self.kinds],
            "collisions": [[c.step, c.a, c.b] for c in self.collisions],
            "terminals": [None if t is None else t.value for t in self.terminals],
            "steps_alive": self.steps_alive,
            "sources": list(self.ego_sources),
        }
        arrays = (
            self.lengths, self.widths, self.states, self.alive, self.ego_actions,
            self.ego_accel, self.ego_jerk, self.terminal_steps,
        )
        return json.dumps(meta, sort_keys=True).encode() + b"".join(
            np.ascontiguousarray(a).tobytes() for a in arrays
        )

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def run_episode(
    scenario: Scenario,
    ego_controller: Planner,
    traffic_controller: TrafficAgent,
    config: EngineConfig | None = None,
    seed: int = 0,
) -> EpisodeLog:
    world = World(scenario, config)
    cfg = world.config
    ego = world.ego
    if getattr(traffic_controller, "replays_log", False):
        world.replay[:] = True
        world.replay[ego] = False
    ego_controller.reset(world, seed)
    traffic_controller.reset(world, seed + 1)

    frames = [world.pose_array()]
    alive_frames = []
    events: list[CollisionEvent] = []
    actions, accels, sources, steers = [], [], [], []

    check = check_terminals(world)
    apply_terminals(world, check)
    events += [CollisionEvent(0, a, b) for a, b in check.collisions]
    alive_frames.append(world.alive.copy())

    grid = world.grid
    prev_speed = float(world.speed[ego])
    while world.alive[ego] and world.t < world.horizon - 1:
        t = world.t
        try:
            decision = ego_controller.plan(world, ego)
        except Exception as exc:
            raise ControllerError(f"planner {getattr(ego_controller, 'name', '?')} failed: {exc}", t) from exc
        ego_action = grid.clamp(decision.action)

        driven = [int(i) for i in np.flatnonzero(world.alive & ~world.replay) if i != ego]
        acc = np.zeros(world.n_agents)
        steer = np.zeros(world.n_agents)
        acc[ego], steer[ego] = ego_action.acceleration, ego_action.steering
        for i in driven:
            try:
                a = traffic_controller.act(world, i)
            except Exception as exc:
                raise ControllerError(
                    f"traffic {getattr(traffic_controller, 'name', '?')} failed on agent {i}: {exc}", t
                ) from exc
            a = grid.clamp(a)
            acc[i], steer[i] = a.acceleration, a.steering

        replayed = [expert_replay_step(world, int(i)) for i in np.flatnonzero(world.alive & world.replay)]
        replay_ids = np.flatnonzero(world.alive & world.replay)

        move = np.array([ego] + driven, dtype=int)
        nx, ny, nh, nv = step_bicycle_arrays(
            world.x[move], world.y[move], world.heading[move], world.speed[move],
            acc[move], steer[move], world.dt, world.wheelbase[move], cfg.v_min, cfg.v_max,
        )
        world.x[move], world.y[move], world.heading[move], world.speed[move] = nx, ny, nh, nv
        world.t = t + 1
        for i, st in zip(replay_ids, replayed):
            if st.alive:
                world.x[i], world.y[i], world.heading[i], world.speed[i] = st.x, st.y, st.heading, st.speed
            else:
                world.alive[i] = False
                world.terminal[i] = Terminal.EXPIRED
                world.terminal_step[i] = world.t

        check = check_terminals(world)
        apply_terminals(world, check)
        events += [CollisionEvent(world.t, a, b) for a, b in check.collisions]

        v = float(world.speed[ego])
        a_long = (v - prev_speed) / world.dt
        a_lat = v * v * math.tan(ego_action.steering) / world.wheelbase[ego]
        prev_speed = v
        actions.append((ego_action.acceleration, ego_action.steering))
        accels.append((a_long, a_lat))
        steers.append(ego_action.steering)
        sources.append(decision.source)
        frames.append(world.pose_array())
        alive_frames.append(world.alive.copy())

    accel = np.array(accels, dtype=float).reshape(-1, 2)
    jerk = np.zeros_like(accel)
    if len(accel) > 1:
        jerk[1:] = np.diff(accel, axis=0) / world.dt
    return EpisodeLog(
        scenario_id=scenario.id,
        dt=world.dt,
        ego_index=ego,
        kinds=world.kinds,
        lengths=world.length.copy(),
        widths=world.width.copy(),
        states=np.stack(frames),
        alive=np.stack(alive_frames),
        ego_actions=np.array(actions, dtype=float).reshape(-1, 2),
        ego_accel=accel,
        ego_jerk=jerk,
        collisions=tuple(events),
        terminals=tuple(world.terminal),
        terminal_steps=world.terminal_step.copy(),
        steps_alive=len(actions),
        ego_sources=tuple(sources),
        ego_steering=np.array(steers, dtype=float),
    )
