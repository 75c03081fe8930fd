"""Deterministic synthetic scenario factory.

Each template builds a small road layout plus logged trajectories. Parameters
are either fixed numbers or ``(low, high)`` ranges sampled uniformly from a
generator seeded with the caller's seed, so output is a pure function of
``(spec, seed)``.

Template goals use a permissive ``max_speed`` so that a goal is a waypoint
that can be driven through; file-loaded scenarios keep the stricter default.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .dynamics import AgentKind
from .geometry import wrap_angle
from .scenario import (
    AgentTrack,
    GoalSpec,
    LoggedState,
    MapPolyline,
    PolylineKind,
    Scenario,
    validate,
)

LANE_WIDTH = 3.5
WAYPOINT_GOAL_SPEED = 20.0


class UnknownTemplate(KeyError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    template: str
    params: Mapping[str, float | tuple[float, float]] = field(default_factory=dict)


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary parts (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256("/".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


class _Params:
    def __init__(self, defaults: Mapping, overrides: Mapping, rng: np.random.Generator):
        unknown = set(overrides) - set(defaults)
        if unknown:
            raise ValueError(f"unknown template parameters: {sorted(unknown)}")
        self._vals = {}
        # sample in sorted order so results don't depend on dict ordering
        for key in sorted(defaults):
            spec = overrides.get(key, defaults[key])
            if isinstance(spec, (tuple, list)):
                lo, hi = float(spec[0]), float(spec[1])
                self._vals[key] = lo if lo == hi else float(rng.uniform(lo, hi))
            else:
                self._vals[key] = float(spec)

    def __getitem__(self, key: str) -> float:
        return self._vals[key]


def _r(v: float) -> float:
    return round(float(v), 6)


def _heading(h: float) -> float:
    # rounding can push a heading just past pi
    return min(_r(wrap_angle(h)), math.pi)


def _straight_track(x, y, heading, speed, n, dt, kind=AgentKind.VEHICLE, length=4.5, width=2.0, controllable=True):
    c, s = math.cos(heading), math.sin(heading)
    states = tuple(
        LoggedState(_r(x + c * speed * dt * t), _r(y + s * speed * dt * t), _heading(heading), _r(speed))
        for t in range(n)
    )
    return AgentTrack(kind, _r(length), _r(width), states, controllable)


def _path_track(path: np.ndarray, speed, n, dt, length=4.5, width=2.0, kind=AgentKind.VEHICLE, controllable=True):
    """Constant-speed track following a dense polyline path."""
    d = np.diff(path, axis=0)
    seg = np.hypot(d[:, 0], d[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    states = []
    for t in range(n):
        s = min(speed * dt * t, cum[-1] - 1e-6)
        k = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1))
        f = (s - cum[k]) / seg[k]
        p = path[k] + f * d[k]
        states.append(LoggedState(_r(p[0]), _r(p[1]), _heading(math.atan2(d[k, 1], d[k, 0])), _r(speed)))
    return AgentTrack(kind, _r(length), _r(width), tuple(states), controllable)


def _line(pid, kind, pts):
    return MapPolyline(kind, tuple((_r(x), _r(y)) for x, y in pts), pid)


def _straight_road(n_lanes: int, x0: float, x1: float, step: float = 20.0):
    """Parallel lanes along +x starting at y=0, plus the two outer edges."""
    xs = np.arange(x0, x1 + 1e-9, step)
    polys = []
    for i in range(n_lanes):
        polys.append(_line(i, PolylineKind.LANE_CENTER, [(x, i * LANE_WIDTH) for x in xs]))
    lo = -LANE_WIDTH / 2
    hi = (n_lanes - 0.5) * LANE_WIDTH
    polys.append(_line(n_lanes, PolylineKind.ROAD_EDGE, [(x0, lo), (x1, lo)]))
    polys.append(_line(n_lanes + 1, PolylineKind.ROAD_EDGE, [(x0, hi), (x1, hi)]))
    return polys


def _straight_free_flow(p: _Params, sid: str) -> Scenario:
    n, dt = 91, 0.1
    ego = _straight_track(0.0, 0.0, 0.0, p["ego_speed"], n, dt, length=p["ego_length"])
    return Scenario(
        id=sid,
        map=tuple(_straight_road(1, -20.0, 180.0)),
        agents=(ego,),
        ego_index=0,
        goal=GoalSpec((_r(p["goal_distance"]), 0.0), 2.0, WAYPOINT_GOAL_SPEED),
        horizon_steps=n,
        dt=dt,
    )


def _lane_change_path(x0, x1, y0, y1, start, end, n=200):
    xs = np.linspace(x0, x1, n)
    u = np.clip((xs - start) / (end - start), 0.0, 1.0)
    ys = y0 + (y1 - y0) * (3 * u**2 - 2 * u**3)
    return np.stack([xs, ys], axis=1)


def _blocked_lane(p: _Params, sid: str) -> Scenario:
    n, dt = 91, 0.1
    gap = p["blocker_gap"]
    left = LANE_WIDTH
    goal_x = gap + p["goal_past_blocker"]
    ego_speed = p["ego_speed"]
    path = _lane_change_path(0.0, goal_x + 60, 0.0, left, gap - 18.0, gap - 4.0)
    ego = _path_track(path, ego_speed, n, dt, length=p["ego_length"])
    blocker = _straight_track(gap, p["blocker_offset"], 0.0, 0.0, n, dt, length=p["blocker_length"], controllable=False)
    agents = [ego, blocker]
    for i in range(int(p["n_ambient"])):
        agents.append(_straight_track(goal_x + 20.0 + 25.0 * i, left, 0.0, p["ambient_speed"], n, dt))
    return Scenario(
        id=sid,
        map=tuple(_straight_road(2, -20.0, 180.0)),
        agents=tuple(agents),
        ego_index=0,
        goal=GoalSpec((_r(goal_x), left), 2.0, WAYPOINT_GOAL_SPEED),
        horizon_steps=n,
        dt=dt,
    )


def _arc(center, radius, a0, a1, n=12):
    ang = np.linspace(a0, a1, n)
    return np.stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)], axis=1)


def _unprotected_turn(p: _Params, sid: str) -> Scenario:
    n, dt = 121, 0.1
    h = LANE_WIDTH / 2
    w = LANE_WIDTH
    L = 80.0
    ys = np.arange(-L, L + 1e-9, 20.0)
    polys = [
        _line(0, PolylineKind.LANE_CENTER, [(h, y) for y in ys]),  # northbound
        _line(1, PolylineKind.LANE_CENTER, [(-h, -y) for y in ys]),  # southbound
        _line(2, PolylineKind.LANE_CENTER, [(y, -h) for y in ys]),  # eastbound
        _line(3, PolylineKind.LANE_CENTER, [(-y, h) for y in ys]),  # westbound
    ]
    r = 8.0 + h
    turn = _arc((-8.0, -8.0), r, 0.0, math.pi / 2)
    # left-turn route: approach, arc, then straight out west
    route_lane = np.concatenate([[(h, y) for y in ys if y < -8.0], turn, [(-y, h) for y in ys if -y < -8.0]])
    polys.append(_line(4, PolylineKind.LANE_CENTER, route_lane))
    edges = [
        [(w, -L), (w, -w)], [(w, w), (w, L)], [(-w, -L), (-w, -w)], [(-w, w), (-w, L)],
        [(-L, w), (-w, w)], [(w, w), (L, w)], [(-L, -w), (-w, -w)], [(w, -w), (L, -w)],
    ]
    polys += [_line(5 + i, PolylineKind.ROAD_EDGE, e) for i, e in enumerate(edges)]

    approach = p["ego_approach"]
    route = np.concatenate(
        [np.array([[h, -approach], [h, -8.0]]), turn[1:], np.array([[-L, h]])]
    )
    ego = _path_track(route, p["ego_speed"], n, dt)
    agents = [ego]
    for i in range(int(p["n_oncoming"])):
        y0 = p["oncoming_start"] + 18.0 * i
        agents.append(_straight_track(-h, y0, -math.pi / 2, p["oncoming_speed"], n, dt))
    # follower in the ego's lane
    agents.append(_straight_track(h, -approach - 30.0, math.pi / 2, p["ego_speed"], n, dt))
    if p["pedestrian"] > 0:
        agents.append(
            _straight_track(-12.0, 6.0, -math.pi / 2, 1.2, n, dt, AgentKind.PEDESTRIAN, 0.8, 0.8, False)
        )
    goal_x = -p["goal_west"]
    return Scenario(
        id=sid,
        map=tuple(polys),
        agents=tuple(agents),
        ego_index=0,
        goal=GoalSpec((_r(goal_x), h), 2.0, WAYPOINT_GOAL_SPEED),
        horizon_steps=n,
        dt=dt,
    )


def _multi_lane_traffic(p: _Params, sid: str, rng: np.random.Generator) -> Scenario:
    n, dt = 91, 0.1
    n_lanes = int(p["n_lanes"])
    n_agents = int(p["n_agents"])
    road = p["road_length"]
    ego_lane = n_lanes // 2
    agents = [_straight_track(0.0, ego_lane * LANE_WIDTH, 0.0, p["ego_speed"], n, dt)]
    # slots along each lane, spaced so footprints never overlap at t=0
    spacing = 12.0
    slots = [(lane, x) for lane in range(n_lanes) for x in np.arange(-road / 4, road * 0.6, spacing)]
    slots = [s for s in slots if not (s[0] == ego_lane and abs(s[1]) < spacing)]
    if len(slots) < n_agents - 1:
        raise ValueError("too many agents for the road length")
    pick = rng.choice(len(slots), size=n_agents - 1, replace=False)
    for k in sorted(int(i) for i in pick):
        lane, x = slots[k]
        speed = float(rng.uniform(p["speed_low"], p["speed_high"]))
        agents.append(_straight_track(x, lane * LANE_WIDTH, 0.0, speed, n, dt))
    return Scenario(
        id=sid,
        map=tuple(_straight_road(n_lanes, -road / 2, road)),
        agents=tuple(agents),
        ego_index=0,
        goal=GoalSpec((_r(p["goal_distance"]), ego_lane * LANE_WIDTH), 2.0, WAYPOINT_GOAL_SPEED),
        horizon_steps=n,
        dt=dt,
    )


TEMPLATES: dict[str, tuple[dict, Callable]] = {
    "straight_free_flow": (
        {"ego_speed": (10.0, 12.0), "goal_distance": 100.0, "ego_length": (4.3, 4.8)},
        _straight_free_flow,
    ),
    "blocked_lane": (
        {
            "blocker_gap": 30.0,
            "goal_past_blocker": 25.0,
            "ego_speed": (4.0, 8.0),
            "ego_length": (4.3, 4.8),
            "blocker_length": (4.2, 5.0),
            "blocker_offset": (-0.3, 0.3),
            "n_ambient": 1.0,
            "ambient_speed": (10.0, 12.0),
        },
        _blocked_lane,
    ),
    "unprotected_turn": (
        {
            "ego_speed": (5.0, 8.0),
            "ego_approach": (20.0, 30.0),
            "oncoming_speed": (7.0, 11.0),
            "oncoming_start": (15.0, 45.0),
            "n_oncoming": 2.0,
            "pedestrian": 1.0,
            "goal_west": (15.0, 25.0),
        },
        _unprotected_turn,
    ),
    "multi_lane_traffic": (
        {
            "n_agents": 16.0,
            "n_lanes": 3.0,
            "road_length": 400.0,
            "ego_speed": (8.0, 12.0),
            "speed_low": 6.0,
            "speed_high": 14.0,
            "goal_distance": 90.0,
        },
        _multi_lane_traffic,
    ),
}


def generate_synthetic(spec: SyntheticSpec | str, seed: int, scenario_id: str | None = None) -> Scenario:
    """Build a validated scenario from a template; pure in ``(spec, seed)``."""
    if isinstance(spec, str):
        spec = SyntheticSpec(spec)
    if spec.template not in TEMPLATES:
        raise UnknownTemplate(spec.template)
    defaults, build = TEMPLATES[spec.template]
    rng = np.random.default_rng(seed)
    params = _Params(defaults, spec.params, rng)
    sid = scenario_id or f"{spec.template}-{seed}"
    if build is _multi_lane_traffic:
        scenario = build(params, sid, rng)
    else:
        scenario = build(params, sid)
    return validate(scenario)
