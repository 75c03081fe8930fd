"""Discrete-action policy interface and a hand-written heuristic policy.

The heuristic is a stand-in for a learned policy: it rolls every grid action
forward for a short preview in the ego frame (hold the action, then settle
back toward the lane direction) and scores the end state by a
potential built from goal progress, alignment, speed tracking, comfort and
soft penalties for getting close to partners or road edges.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from ..dynamics import WHEELBASE_RATIO, ActionGrid
from ..engine import ObservationFrame
from ..reward import ConditioningVector

HOLD_STEPS = 10
SETTLE_STEPS = 10
SETTLE_TIME = 0.5
COMFORT_LIMIT = 3.0
# clearances below these margins are penalized, linearly up to contact
EDGE_MARGIN = 0.3
PARTNER_MARGIN = 0.5


@dataclass(frozen=True)
class RankedActions:
    """Action indices with scores, best first (ties by lower index)."""

    indices: tuple[int, ...]
    scores: tuple[float, ...]

    def __post_init__(self):
        if not self.indices:
            raise ValueError("RankedActions must not be empty")
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("RankedActions indices must be unique")
        if len(self.scores) != len(self.indices):
            raise ValueError("one score per index")

    @classmethod
    def from_scores(cls, scores: np.ndarray) -> "RankedActions":
        scores = np.asarray(scores, dtype=float)
        idx = np.arange(len(scores))
        order = np.lexsort((idx, -scores))
        return cls(tuple(int(i) for i in order), tuple(float(scores[i]) for i in order))

    def top(self, k: int) -> tuple[int, ...]:
        return self.indices[:k]

    def __len__(self) -> int:
        return len(self.indices)


class Policy(Protocol):
    name: str

    def rank(self, obs: ObservationFrame) -> RankedActions: ...


@dataclass(frozen=True)
class HeuristicWeights:
    progress: float = 1.0
    goal_align: float = 0.3
    lane_align: float = 0.3
    speed: float = 0.3
    comfort: float = 0.2
    collision: float = 5.0
    edge: float = 5.0
    center: float = 0.05
    blocked: float = 5.0
    desired_speed: float = 15.0

    @classmethod
    def from_conditioning(cls, c: ConditioningVector) -> "HeuristicWeights":
        return cls(
            collision=1.0 + 2.0 * c.collision,
            comfort=0.2 + 4.0 * c.comfort,
            lane_align=0.2 + 10.0 * c.l_align,
            desired_speed=max(0.5 * c.v_goal, 2.0),
        )


def _discs(x, y, heading, length, width):
    """Three covering discs along a box; returns centers (..., 3, 2) and radius."""
    off = np.array([-1.0, 0.0, 1.0]) * (np.asarray(length) / 3.0)[..., None]
    cx = x[..., None] + off * np.cos(heading)[..., None]
    cy = y[..., None] + off * np.sin(heading)[..., None]
    r = np.hypot(0.5 * width, 0.5 * np.maximum(length, width) / 3.0)
    return cx, cy, r


def _point_segments(px, py, seg):
    """Distance from points (...) to segments (S, 4) -> (..., S)."""
    x0, y0, x1, y1 = seg.T
    ex, ey = x1 - x0, y1 - y0
    len2 = np.maximum(ex * ex + ey * ey, 1e-12)
    t = np.clip(((px[..., None] - x0) * ex + (py[..., None] - y0) * ey) / len2, 0.0, 1.0)
    return np.hypot(x0 + t * ex - px[..., None], y0 + t * ey - py[..., None])


def road_segments(obs: ObservationFrame):
    """Lane and edge segments as (x0, y0, x1, y1) rows plus their directions, ego frame."""
    r = obs.roads
    half = 0.5 * r[:, 4]
    x0 = r[:, 0] - half * r[:, 3]
    y0 = r[:, 1] - half * r[:, 2]
    x1 = r[:, 0] + half * r[:, 3]
    y1 = r[:, 1] + half * r[:, 2]
    seg = np.stack([x0, y0, x1, y1], axis=1)
    direction = np.arctan2(r[:, 2], r[:, 3])
    lane = r[:, 5] > 0.5
    edge = r[:, 6] > 0.5
    return seg[lane], direction[lane], seg[edge]


class HeuristicPolicy:
    """Deterministic scorer over every action of the grid."""

    def __init__(
        self,
        grid: ActionGrid | None = None,
        dt: float = 0.1,
        weights: HeuristicWeights | None = None,
        name: str = "heuristic",
    ):
        self.grid = grid or ActionGrid.uniform()
        self.dt = dt
        self.weights = weights or HeuristicWeights()
        self.name = name

    def potentials(self, obs: ObservationFrame) -> np.ndarray:
        w = self.weights
        dt = self.dt
        acc, steer = self.grid.as_arrays()
        speed, length, width, gdist, gsin, gcos, _ = obs.ego
        wheelbase = WHEELBASE_RATIO * length
        n = len(acc)
        steps = HOLD_STEPS + SETTLE_STEPS
        lanes, lane_dir, edges = road_segments(obs)
        x = np.zeros(n)
        y = np.zeros(n)
        h = np.zeros(n)
        v = np.full(n, float(speed))
        xs = np.empty((n, steps))
        ys = np.empty((n, steps))
        hs = np.empty((n, steps))
        for k in range(steps):
            if k < HOLD_STEPS:
                a_k, s_k = acc, steer
            else:
                # settle: keep speed and turn back toward the nearest lane direction
                a_k = 0.0
                s_k = 0.0
                if len(lanes):
                    j = np.argmin(_point_segments(x, y, lanes), axis=1)
                    herr = np.angle(np.exp(1j * (h - lane_dir[j])))
                    rate = -herr / SETTLE_TIME
                    s_k = np.clip(np.arctan(wheelbase * rate / np.maximum(v, 0.1)), steer.min(), steer.max())
            v = np.maximum(v + a_k * dt, 0.0)
            x = x + v * np.cos(h) * dt
            y = y + v * np.sin(h) * dt
            h = h + v / wheelbase * np.tan(s_k) * dt
            xs[:, k], ys[:, k], hs[:, k] = x, y, h

        gx, gy = gdist * gcos, gdist * gsin
        d_end = np.hypot(gx - x, gy - y)
        ref = max(w.desired_speed, 1.0) * steps * dt
        score = w.progress * (gdist - d_end) / ref
        bearing = np.arctan2(gy - y, gx - x)
        score += w.goal_align * np.where(d_end > 1.0, np.cos(h - bearing), 1.0)
        score -= w.speed * np.abs(v - w.desired_speed) / max(w.desired_speed, 1.0)
        v_hold = np.maximum(speed + acc * HOLD_STEPS * dt, 0.0)
        a_lat = v_hold**2 * np.tan(steer) / wheelbase
        score -= w.comfort * ((np.abs(acc) > COMFORT_LIMIT).astype(float) + (np.abs(a_lat) > COMFORT_LIMIT))

        if len(lanes):
            d = _point_segments(x, y, lanes)
            j = np.argmin(d, axis=1)
            herr = h - lane_dir[j]
            score += w.lane_align * np.cos(herr)
            score -= w.center * np.minimum(d[np.arange(n), j] / 1.75, 1.0)

        ecx, ecy, er = _discs(xs, ys, hs, np.full((n, steps), length), np.full((n, steps), width))
        if len(edges):
            # the box side rather than the covering disc: discs overstate the width
            d = _point_segments(ecx, ecy, edges).min(axis=-1) - 0.5 * width
            score -= w.edge * np.clip((EDGE_MARGIN - d) / EDGE_MARGIN, 0.0, 2.0).max(axis=(1, 2))

        p = obs.partners[obs.partners[:, 7] > 0.5]
        if len(p):
            t = (np.arange(steps) + 1) * dt
            ph = np.arctan2(p[:, 2], p[:, 3])
            px = p[:, 0, None] + p[:, 4, None] * np.cos(ph)[:, None] * t
            py = p[:, 1, None] + p[:, 4, None] * np.sin(ph)[:, None] * t
            shape = px.shape
            pcx, pcy, pr = _discs(
                px, py, np.broadcast_to(ph[:, None], shape),
                np.broadcast_to(p[:, 5, None], shape), np.broadcast_to(p[:, 6, None], shape),
            )
            # (n, steps, 3) against (P, steps, 3)
            dx = ecx[:, None, :, :, None] - pcx[None, :, :, None, :]
            dy = ecy[:, None, :, :, None] - pcy[None, :, :, None, :]
            clear = np.hypot(dx, dy) - er[:, None, :, None, None] - pr[None, :, :, None, None]
            clear = clear.min(axis=(3, 4))
            penalty = np.clip((PARTNER_MARGIN - clear) / PARTNER_MARGIN, 0.0, 2.0)
            score -= w.collision * penalty.max(axis=2).sum(axis=1)
            score -= w.blocked * self._blocked(x, y, h, float(speed), pcx, pcy, pr, width)
        return score

    @staticmethod
    def _blocked(x, y, h, speed, pcx, pcy, pr, width):
        """How soon the straight-line continuation of each end pose runs into a partner.

        Distance is counted from the start of the preview, so slowing down in
        the same direction does not clear a blocked corridor; only heading
        somewhere else does. 0 when clear within the lookahead, up to 1 when a
        partner sits right in front.
        """
        look = max(20.0, 4.0 * speed)
        # partner discs at the end of the preview, relative to each end pose
        qx = pcx[:, -1, :].ravel()
        qy = pcy[:, -1, :].ravel()
        qr = np.repeat(pr[:, -1], 3)
        dx = qx[None, :] - x[:, None]
        dy = qy[None, :] - y[:, None]
        c, s = np.cos(h)[:, None], np.sin(h)[:, None]
        lon = dx * c + dy * s
        lat = -dx * s + dy * c
        hit = (lon > 0.0) & (np.abs(lat) < 0.5 * width + qr[None, :] + 0.3)
        dist = np.where(hit, lon, np.inf).min(axis=1) + np.hypot(x, y)
        return np.clip(1.0 - dist / look, 0.0, 1.0)

    def rank(self, obs: ObservationFrame) -> RankedActions:
        return RankedActions.from_scores(self.potentials(obs))
