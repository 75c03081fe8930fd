"""Benchmark score, its subscores, at-fault collision classification and ADE."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import AgentState, Terminal
from .geometry import MapIndex, NoLaneError, Obb, wrap_angle
from .scenario import GoalSpec

W_COMFORT = 0.2
W_ALIGN = 0.5
W_CENTER = 0.3
ACCEL_LIMIT = 3.0
JERK_LIMIT = 5.0
ALIGN_TOLERANCE = math.pi / 12
CENTER_REF = 2.0
STOP_SPEED = 0.1
FRONT_HALF_ANGLE = math.radians(30.0)
REAR_HALF_ANGLE = math.radians(15.0)
CLOSING_SPEED = 0.5
LANE_HALF_WIDTH = 1.75
DRIFT_LIMIT = 0.3
DRIFT_WINDOW = 10


class EmptyEpisode(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class CollisionCategory(str, enum.Enum):
    STOPPED_EGO = "stopped_ego"
    STOPPED_TRACK = "stopped_track"
    ACTIVE_REAR = "active_rear"
    ACTIVE_FRONT = "active_front"
    ACTIVE_LATERAL = "active_lateral"
    VRU_CONTACT = "vru_contact"


@dataclass(frozen=True)
class CollisionVerdict:
    category: CollisionCategory
    at_fault: bool
    lane_change_detected: bool


@dataclass(frozen=True)
class ScoreBreakdown:
    s_cmf: float
    s_align: float
    s_ctr: float
    af_collision: int
    off_road: int
    goal: int
    combined: float
    steps_alive: int = 0
    verdicts: tuple[CollisionVerdict, ...] = ()


def combine(af_collision, off_road, goal, s_cmf, s_align, s_ctr):
    """Outcome gates times the weighted behavior score (works on arrays)."""
    behavior = W_COMFORT * s_cmf + W_ALIGN * s_align + W_CENTER * s_ctr
    return (1 - af_collision) * (1 - off_road) * goal * behavior


# array-level subscores, shared with planners that score short rollouts


def comfort_from_arrays(accel: np.ndarray, jerk: np.ndarray) -> float:
    """Comfort subscore from per-step (long, lat) accelerations and jerks."""
    accel = np.asarray(accel, dtype=float).reshape(-1, 2)
    jerk = np.asarray(jerk, dtype=float).reshape(-1, 2)
    steps = len(accel)
    if steps == 0:
        raise EmptyEpisode("comfort needs at least one active step")
    violations = (
        (np.abs(accel[:, 0]) > ACCEL_LIMIT).sum()
        + (np.abs(accel[:, 1]) > ACCEL_LIMIT).sum()
        + (np.abs(jerk).max(axis=1) > JERK_LIMIT).sum()
    )
    return 1.0 - min(violations / (3.0 * steps), 1.0)


def alignment_from_errors(heading_errors) -> float:
    err = np.abs(wrap_angle(np.asarray(heading_errors, dtype=float)))
    if err.size == 0:
        raise EmptyEpisode("alignment needs at least one active step")
    return float(np.mean(err < ALIGN_TOLERANCE))


def centering_from_offsets(lateral_offsets) -> float:
    d = np.abs(np.asarray(lateral_offsets, dtype=float))
    if d.size == 0:
        raise EmptyEpisode("centering needs at least one active step")
    return 1.0 - min(float(np.mean(d)) / CENTER_REF, 1.0)


def _active_poses(log) -> np.ndarray:
    if log.steps_alive < 1:
        raise EmptyEpisode("episode has no active steps")
    return log.states[1 : log.steps_alive + 1, log.ego_index]


def comfort_score(log) -> float:
    if log.steps_alive < 1:
        raise EmptyEpisode("episode has no active steps")
    return comfort_from_arrays(log.ego_accel[: log.steps_alive], log.ego_jerk[: log.steps_alive])


def lane_alignment_score(log, map_index: MapIndex) -> float:
    poses = _active_poses(log)
    try:
        _, herr, _ = map_index.frenet_arrays(poses[:, 0], poses[:, 1], poses[:, 2])
    except NoLaneError:
        warnings.warn("no lane centerlines; lane alignment scored 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return alignment_from_errors(herr)


def lane_center_score(log, map_index: MapIndex) -> float:
    poses = _active_poses(log)
    try:
        lat, _, _ = map_index.frenet_arrays(poses[:, 0], poses[:, 1], poses[:, 2])
    except NoLaneError:
        warnings.warn("no lane centerlines; lane centering scored 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return centering_from_offsets(lat)


def lane_change_detected(ego: AgentState, map_index: MapIndex, recent_track) -> bool:
    """Footprint on two or more lanes and sideways drift over the recent window.

    ``recent_track`` holds (x, y, heading, ...) rows ending at the contact
    step; drift is measured perpendicular to the heading at the window start.
    """
    box = Obb.from_pose(ego.x, ego.y, ego.heading, ego.length, ego.width)
    if len(map_index.lanes_overlapping(box, LANE_HALF_WIDTH)) < 2:
        return False
    track = np.asarray(recent_track, dtype=float)
    if len(track) < 2:
        return False
    x0, y0, h0 = track[0, 0], track[0, 1], track[0, 2]
    dx, dy = track[-1, 0] - x0, track[-1, 1] - y0
    drift = abs(-dx * math.sin(h0) + dy * math.cos(h0))
    return bool(drift > DRIFT_LIMIT)


def _gap(a: AgentState, b: AgentState) -> float:
    return math.hypot(b.x - a.x, b.y - a.y) - 0.5 * (a.length + b.length)


def closing_speed(ego: AgentState, other: AgentState, ego_prev=None, other_prev=None, dt: float = 0.1) -> float:
    """Rate at which the bumper gap shrinks (positive when approaching)."""
    if ego_prev is not None and other_prev is not None:
        return (_gap(ego_prev, other_prev) - _gap(ego, other)) / dt
    dx, dy = other.x - ego.x, other.y - ego.y
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        return 0.0
    ux, uy = dx / dist, dy / dist
    rvx = ego.speed * math.cos(ego.heading) - other.speed * math.cos(other.heading)
    rvy = ego.speed * math.sin(ego.heading) - other.speed * math.sin(other.heading)
    return rvx * ux + rvy * uy


def classify_collision(
    ego: AgentState,
    other: AgentState,
    map_index: MapIndex,
    recent_ego_track,
    ego_prev: AgentState | None = None,
    other_prev: AgentState | None = None,
    dt: float = 0.1,
) -> CollisionVerdict:
    """Category and fault of an ego contact, checked in a fixed order.

    Vulnerable road users are always the ego's fault; then a standing ego,
    then a standing other agent, then the other agent's bearing: ahead and
    being closed on, behind, or anything else (lateral).
    """
    lc = lane_change_detected(ego, map_index, recent_ego_track)
    if other.kind.is_vru:
        return CollisionVerdict(CollisionCategory.VRU_CONTACT, True, lc)
    if ego.speed < STOP_SPEED:
        return CollisionVerdict(CollisionCategory.STOPPED_EGO, False, lc)
    if other.speed < STOP_SPEED:
        return CollisionVerdict(CollisionCategory.STOPPED_TRACK, True, lc)
    bearing = abs(wrap_angle(math.atan2(other.y - ego.y, other.x - ego.x) - ego.heading))
    if bearing <= FRONT_HALF_ANGLE and closing_speed(ego, other, ego_prev, other_prev, dt) > CLOSING_SPEED:
        return CollisionVerdict(CollisionCategory.ACTIVE_FRONT, True, lc)
    if bearing >= math.pi - REAR_HALF_ANGLE:
        return CollisionVerdict(CollisionCategory.ACTIVE_REAR, lc, lc)
    return CollisionVerdict(CollisionCategory.ACTIVE_LATERAL, lc, lc)


def _state_at(log, step: int, i: int) -> AgentState:
    x, y, h, v = log.states[step, i]
    return AgentState(float(x), float(y), float(h), float(v), float(log.lengths[i]), float(log.widths[i]), kind=log.kinds[i])


def ego_collision_verdicts(log, map_index: MapIndex) -> list[CollisionVerdict]:
    out = []
    e = log.ego_index
    for ev in log.collisions:
        if e not in (ev.a, ev.b):
            continue
        other = ev.b if ev.a == e else ev.a
        step = ev.step
        prev = step - 1 if step > 0 else None
        track = log.states[max(0, step - DRIFT_WINDOW) : step + 1, e]
        out.append(
            classify_collision(
                _state_at(log, step, e),
                _state_at(log, step, other),
                map_index,
                track,
                None if prev is None else _state_at(log, prev, e),
                None if prev is None else _state_at(log, prev, other),
                log.dt,
            )
        )
    return out


def score_episode(log, map_index: MapIndex, goal: GoalSpec | None = None) -> ScoreBreakdown:
    """Score one episode.

    An episode whose ego terminates at step 0 has no active steps; its
    behavior subscores are reported as 0.
    """
    verdicts = tuple(ego_collision_verdicts(log, map_index))
    af = int(any(v.at_fault for v in verdicts))
    term = log.ego_terminal
    off = int(term is Terminal.OFF_ROAD)
    reached = int(term is Terminal.GOAL_REACHED)
    if log.steps_alive >= 1:
        s_cmf = comfort_score(log)
        s_align = lane_alignment_score(log, map_index)
        s_ctr = lane_center_score(log, map_index)
    else:
        s_cmf = s_align = s_ctr = 0.0
    return ScoreBreakdown(
        s_cmf=s_cmf,
        s_align=s_align,
        s_ctr=s_ctr,
        af_collision=af,
        off_road=off,
        goal=reached,
        combined=combine(af, off, reached, s_cmf, s_align, s_ctr),
        steps_alive=log.steps_alive,
        verdicts=verdicts,
    )


def ade_minade(rollouts, ground_truth) -> tuple[float, float]:
    """(minADE, ADE) of K rollouts against the logged trajectories.

    ``rollouts`` has shape (K, A, T, 2) and ``ground_truth`` (A, T, 2); a
    single-agent (K, T, 2) / (T, 2) pair is also accepted. Both errors are
    averaged over agents.
    """
    r = np.asarray(rollouts, dtype=float)
    g = np.asarray(ground_truth, dtype=float)
    if g.ndim == 2:
        g = g[None]
        r = r[:, None] if r.ndim == 3 else r
    if r.ndim != 4 or r.shape[1:] != g.shape or r.shape[0] < 1:
        raise LengthMismatch(f"rollouts {r.shape} do not align with ground truth {g.shape}")
    per = np.linalg.norm(r - g[None], axis=-1).mean(axis=-1)  # (K, A)
    return float(per.min(axis=0).mean()), float(per.mean(axis=0).mean())
