"""Intelligent Driver Model with lane-following lateral control."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..dynamics import Action
from ..geometry import LanePath, NoLaneError, point_segment_distance, project_onto_polyline

GAP_EPS = 0.01
LEADER_CORRIDOR = 2.0
LOOKAHEAD_MIN = 5.0
LOOKAHEAD_TIME = 1.0
LANE_CANDIDATE_SLACK = 1.0


@dataclass(frozen=True)
class IdmParams:
    v0: float = 15.0
    s0: float = 1.0
    T: float = 1.5
    a: float = 1.0
    b: float = 2.0
    delta: float = 4.0

    def __post_init__(self):
        for name in ("v0", "s0", "T", "a", "b", "delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"IDM parameter {name} must be positive")


def idm_acceleration(v: float, gap: float | None, leader_speed: float | None, p: IdmParams = IdmParams()) -> float:
    """Car-following acceleration; ``gap=None`` means free road."""
    free = p.a * (1.0 - (v / p.v0) ** p.delta)
    if gap is None:
        return free
    s = max(gap, GAP_EPS)
    s_star = p.s0 + max(0.0, v * p.T + v * (v - leader_speed) / (2.0 * math.sqrt(p.a * p.b)))
    return free - p.a * (s_star / s) ** 2


def idm_acceleration_arrays(v, gap, leader_speed, p: IdmParams = IdmParams(), v0=None):
    """Vectorized :func:`idm_acceleration`; ``gap=inf`` means free road.

    ``v0`` optionally overrides the desired speed per element.
    """
    v = np.asarray(v, dtype=float)
    v0 = p.v0 if v0 is None else v0
    free = p.a * (1.0 - (v / v0) ** p.delta)
    # an infinite gap divides the desired gap down to exactly 0
    s = np.maximum(gap, GAP_EPS)
    s_star = p.s0 + np.maximum(0.0, v * p.T + v * (v - leader_speed) / (2.0 * math.sqrt(p.a * p.b)))
    return free - p.a * (s_star / s) ** 2


GOAL_SPEED_HEADROOM = 1.0


def goal_arrival_speed(max_speed: float) -> float:
    """Speed aimed for at the goal boundary, kept below the limit to absorb IDM lag."""
    return max(max_speed - GOAL_SPEED_HEADROOM, 0.5 * max_speed)


def goal_capped_speed(target, distance_to_goal, max_speed: float, b: float, radius: float = 0.0):
    """Desired speed limited so that braking at ``b`` enters the goal region under ``max_speed``."""
    room = np.maximum(np.asarray(distance_to_goal, dtype=float) - radius, 0.0)
    return np.minimum(target, np.sqrt(goal_arrival_speed(max_speed) ** 2 + 2.0 * b * room))


def select_lane(map_index, x: float, y: float, heading: float, goal: tuple[float, float] | None = None) -> int:
    """Polyline id of the lane to follow from pose (x, y, heading).

    Candidates are lane polylines within 1 m of the nearest one and heading
    the same way (within 90 degrees). Among them the one passing closest to
    the goal wins; then the nearest, then the lowest id.
    """
    seg, d0, _ = map_index.nearest_lane_segment(x, y)
    if goal is None:
        return int(map_index.poly_id[seg])
    r = d0 + LANE_CANDIDATE_SLACK
    ids = map_index.candidates_in_box(map_index.LANE, (x - r, y - r), (x + r, y + r))
    m = map_index
    d, _ = point_segment_distance(x, y, m.start[ids, 0], m.start[ids, 1], m.end[ids, 0], m.end[ids, 1])
    herr = np.abs(np.angle(np.exp(1j * (heading - m.seg_dir[ids]))))
    ok = (d <= r + 1e-9) & (herr < math.pi / 2)
    if not ok.any():
        return int(m.poly_id[seg])
    cand = {}
    for pid, dist in zip(m.poly_id[ids[ok]], d[ok]):
        pid = int(pid)
        cand[pid] = min(cand.get(pid, math.inf), float(dist))
    if len(cand) == 1:
        return next(iter(cand))
    gx, gy = goal

    def key(pid):
        lane = m.lane_path(pid)
        gd, _ = point_segment_distance(gx, gy, lane.p0[:, 0], lane.p0[:, 1], lane.points[1:, 0], lane.points[1:, 1])
        return (round(float(gd.min()), 9), round(cand[pid], 9), pid)

    return min(cand, key=key)


def pure_pursuit_steering(x, y, heading, speed, wheelbase, polyline, arc=None):
    """Steering toward the lookahead point on ``polyline``; works on arrays.

    ``arc`` may pass in the already known arc positions of the points.
    """
    path = polyline if isinstance(polyline, LanePath) else LanePath(polyline)
    px = np.atleast_1d(np.asarray(x, dtype=float))
    py = np.atleast_1d(np.asarray(y, dtype=float))
    if arc is None:
        arc = path.project(px, py)[0]
    look = np.maximum(LOOKAHEAD_MIN, LOOKAHEAD_TIME * np.atleast_1d(speed))
    tx, ty = path.point_at(arc + look)
    dx = tx - px
    dy = ty - py
    c, s = np.cos(heading), np.sin(heading)
    lx = dx * c + dy * s
    ly = -dx * s + dy * c
    curvature = 2.0 * ly / np.maximum(lx * lx + ly * ly, 1e-9)
    steer = np.arctan(wheelbase * curvature)
    return steer if np.ndim(x) else float(steer[0])


def find_leader(polyline, fx: float, fy: float, ox, oy, oheading, ospeed, olength, flength: float):
    """Nearest agent ahead of the follower within the lane corridor.

    Returns (index into the other arrays, bumper gap, longitudinal speed) or
    ``None`` when the lane ahead is free.
    """
    ox = np.atleast_1d(np.asarray(ox, dtype=float))
    if not len(ox):
        return None
    pts = np.concatenate([[[fx, fy]], np.stack([ox, np.atleast_1d(oy)], axis=1)])
    arc, lat, _, seg_dir = project_onto_polyline(pts, polyline)
    ahead = (arc[1:] > arc[0]) & (np.abs(lat[1:]) <= LEADER_CORRIDOR)
    if not ahead.any():
        return None
    cand = np.flatnonzero(ahead)
    j = int(cand[np.argmin(arc[1:][cand])])
    dist = math.hypot(ox[j] - fx, float(np.atleast_1d(oy)[j]) - fy)
    gap = dist - 0.5 * (flength + float(np.atleast_1d(olength)[j]))
    vlong = float(np.atleast_1d(ospeed)[j]) * math.cos(float(np.atleast_1d(oheading)[j]) - float(seg_dir[1 + j]))
    return j, gap, vlong


def idm_agent_step(world, agent_index: int, p: IdmParams = IdmParams(), goal_speed_cap: bool = False) -> Action:
    """One IDM control for ``agent_index`` in ``world``.

    Longitudinal: IDM against the nearest alive agent ahead on the followed
    lane. Lateral: pure pursuit on that lane. Without lanes the steering is 0
    and the road ahead is treated as free.
    """
    i = agent_index
    x, y, h, v = (float(world.x[i]), float(world.y[i]), float(world.heading[i]), float(world.speed[i]))
    goal = world.goal_of(i)
    v0 = p.v0
    if goal_speed_cap:
        dgoal = math.hypot(goal[0] - x, goal[1] - y)
        v0 = float(goal_capped_speed(p.v0, dgoal, world.goal.max_speed, p.b, world.goal.radius))
        v0 = max(v0, GAP_EPS)
    try:
        pid = select_lane(world.map, x, y, h, goal)
    except NoLaneError:
        acc = float(idm_acceleration_arrays(v, np.inf, 0.0, p, v0))
        return world.grid.clamp(Action(acc, 0.0))
    lane = world.map.lane_path(pid)
    others = np.flatnonzero(world.alive)
    others = others[others != i]
    leader = find_leader(
        lane, x, y, world.x[others], world.y[others], world.heading[others], world.speed[others],
        world.length[others], float(world.length[i]),
    )
    if leader is None:
        acc = float(idm_acceleration_arrays(v, np.inf, 0.0, p, v0))
    else:
        _, gap, vl = leader
        acc = float(idm_acceleration_arrays(v, gap, vl, p, v0))
    steer = pure_pursuit_steering(x, y, h, v, float(world.wheelbase[i]), lane)
    return world.grid.clamp(Action(acc, steer))
