"""Scenario and episode-log builders shared by the tests."""
from __future__ import annotations

import math

import numpy as np

from behavior_engine.dynamics import AgentKind, Terminal
from behavior_engine.engine import CollisionEvent, EpisodeLog
from behavior_engine.scenario import AgentTrack, GoalSpec, LoggedState, MapPolyline, PolylineKind, Scenario


def lane(pid, pts):
    return MapPolyline(PolylineKind.LANE_CENTER, tuple((float(x), float(y)) for x, y in pts), pid)


def edge(pid, pts):
    return MapPolyline(PolylineKind.ROAD_EDGE, tuple((float(x), float(y)) for x, y in pts), pid)


def straight_map(lane_ys=(0.0,), x0=-50.0, x1=250.0, edge_ys=None, step=25.0):
    """Parallel lanes along +x; edges at the given y values (none by default)."""
    xs = np.arange(x0, x1 + 1e-9, step)
    polys = [lane(i, [(x, y) for x in xs]) for i, y in enumerate(lane_ys)]
    for j, y in enumerate(edge_ys or ()):
        polys.append(edge(100 + j, [(x0, y), (x1, y)]))
    return tuple(polys)


def track(states, kind=AgentKind.VEHICLE, length=4.5, width=2.0, controllable=True):
    return AgentTrack(kind, length, width, tuple(LoggedState(*map(float, s)) for s in states), controllable)


def straight_states(x, y, speed, n, heading=0.0, dt=0.1):
    return [
        (x + speed * k * dt * math.cos(heading), y + speed * k * dt * math.sin(heading), heading, speed)
        for k in range(n)
    ]


def make_scenario(agents, map_polys=None, goal=(100.0, 0.0), horizon=91, sid="test", ego_index=0, radius=2.0, max_speed=2.0):
    return Scenario(
        id=sid,
        map=straight_map() if map_polys is None else tuple(map_polys),
        agents=tuple(agents),
        ego_index=ego_index,
        goal=GoalSpec(tuple(map(float, goal)), radius, max_speed),
        horizon_steps=horizon,
    )


def make_log(
    ego_states,
    ego_accel,
    ego_jerk=None,
    others=(),
    kinds=None,
    terminal=None,
    collisions=(),
    dt=0.1,
    lengths=None,
    widths=None,
):
    """EpisodeLog from explicit arrays; ``ego_states`` has steps_alive + 1 frames.

    ``others`` is a sequence of (frames, 4) arrays of the same length.
    """
    ego_states = np.asarray(ego_states, dtype=float)
    frames = len(ego_states)
    states = np.stack([ego_states, *[np.asarray(o, dtype=float) for o in others]], axis=1)
    n = states.shape[1]
    accel = np.asarray(ego_accel, dtype=float).reshape(-1, 2)
    if ego_jerk is None:
        ego_jerk = np.zeros_like(accel)
        if len(accel) > 1:
            ego_jerk[1:] = np.diff(accel, axis=0) / dt
    terminals = [None] * n
    terminals[0] = terminal
    steps = frames - 1
    term_steps = np.full(n, -1)
    if terminal is not None:
        term_steps[0] = steps
    return EpisodeLog(
        scenario_id="log",
        dt=dt,
        ego_index=0,
        kinds=tuple(kinds or [AgentKind.VEHICLE] * n),
        lengths=np.asarray(lengths if lengths is not None else [4.5] * n, dtype=float),
        widths=np.asarray(widths if widths is not None else [2.0] * n, dtype=float),
        states=states,
        alive=np.ones((frames, n), dtype=bool),
        ego_actions=np.zeros((steps, 2)),
        ego_accel=accel,
        ego_jerk=np.asarray(ego_jerk, dtype=float).reshape(-1, 2),
        collisions=tuple(CollisionEvent(*c) for c in collisions),
        terminals=tuple(terminals),
        terminal_steps=term_steps,
        steps_alive=steps,
    )


def saturated_scenario(goal_y, sid="busy", n=91):
    """Every raw component far above its threshold."""
    # ego drives straight but its logged speed and heading oscillate
    ego = [(k * 1.0, 0.0, 0.05 * (-1) ** k, 10.0 + 2.0 * (k % 2)) for k in range(n)]
    # a logged-stationary leader that stays 8 m ahead: always approaching, always close
    leader = [(k * 1.0 + 8.0, 0.0, 0.0, 0.0) for k in range(n)]
    crossers = [straight_states(20.0 + 15.0 * j, -10.0, 2.0, n, heading=math.pi / 2) for j in range(4)]
    parked = [[(5.0 * j - 20.0, 12.0, 0.0, 0.0)] * n for j in range(8)]
    agents = [track(ego), track(leader)] + [track(c) for c in crossers] + [track(p) for p in parked]
    return make_scenario(agents, straight_map((0.0, 3.5)), goal=(150.0, goal_y), sid=sid)


def random_log(rng):
    """Episode log with a wandering ego, random contacts and a random terminal, on lanes y=0 and y=3.5."""
    n = int(rng.integers(0, 40))
    xs = 20 + np.cumsum(rng.uniform(0, 1.5, n + 1))
    ys = rng.uniform(-1.5, 5.0) + np.cumsum(rng.normal(0, 0.15, n + 1))
    hs = rng.normal(0, 0.3, n + 1)
    vs = rng.uniform(0, 15, n + 1)
    vs[rng.random(n + 1) < 0.1] = 0.0
    ego = np.column_stack([xs, ys, hs, vs])
    accel = rng.normal(0, 2.5, (n, 2))
    jerk = rng.normal(0, 4.0, (n, 2))
    others, kinds, collisions = [], [AgentKind.VEHICLE], []
    for j in range(int(rng.integers(0, 3))):
        o = ego + np.column_stack([rng.uniform(-6, 6, (n + 1, 2)), rng.normal(0, 0.5, n + 1), np.zeros(n + 1)])
        o[:, 3] = rng.uniform(0, 15)
        if rng.random() < 0.3:
            o[:, 3] = 0.0
        others.append(o)
        kinds.append(AgentKind(rng.choice(["vehicle", "vehicle", "pedestrian", "cyclist"])))
        collisions.append((int(rng.integers(0, n + 1)), 0, j + 1))
    terminal = rng.choice([None, Terminal.GOAL_REACHED, Terminal.GOAL_REACHED, Terminal.OFF_ROAD, Terminal.COLLIDED])
    return make_log(ego, accel, jerk, others=others, kinds=kinds, terminal=terminal, collisions=collisions)
