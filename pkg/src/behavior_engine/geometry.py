"""Planar geometry used by the engine, metrics and rewards.

Oriented boxes use the closed-set convention throughout: boxes that merely
touch overlap, and a footprint whose corner sits on a road edge crosses it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._geom_kernels import boxes_cross_segments

TWO_PI = 2.0 * math.pi
# slack for closed-set segment/box tests under round-off
EDGE_EPS = 1e-9


class NoLaneError(LookupError):
    """Raised when a lane query runs against a map without lane centerlines."""


def wrap_angle(angle):
    """Wrap an angle (scalar or array) into (-pi, pi]."""
    if np.ndim(angle) == 0:
        a = float(angle)
        if -math.pi < a <= math.pi:
            return a
        w = math.fmod(a + math.pi, TWO_PI)
        if w <= 0.0:
            w += TWO_PI
        return w - math.pi
    a = np.asarray(angle, dtype=float)
    inside = (a > -math.pi) & (a <= math.pi)
    if inside.all():
        return a.copy()
    w = np.fmod(a + math.pi, TWO_PI)
    w = np.where(w <= 0.0, w + TWO_PI, w) - math.pi
    return np.where(inside, a, w)


@dataclass(frozen=True)
class Obb:
    """Oriented rectangle: center, heading and half extents in meters."""

    center: tuple[float, float]
    heading: float
    half_length: float
    half_width: float

    def __post_init__(self):
        if not (self.half_length > 0 and self.half_width > 0):
            raise ValueError("Obb half extents must be positive")

    @classmethod
    def from_pose(cls, x: float, y: float, heading: float, length: float, width: float) -> "Obb":
        return cls((float(x), float(y)), float(heading), 0.5 * float(length), 0.5 * float(width))

    def corners(self) -> np.ndarray:
        """Corners in counter-clockwise order, shape (4, 2)."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        u = np.array([c, s]) * self.half_length
        v = np.array([-s, c]) * self.half_width
        ctr = np.asarray(self.center, dtype=float)
        return np.stack([ctr + u + v, ctr - u + v, ctr - u - v, ctr + u - v])


def obb_overlap_arrays(ax, ay, ah, al, aw, bx, by, bh, bl, bw):
    """Broadcasting separating-axis test.

    Arguments are centers, headings and half extents of two box sets; the
    result broadcasts their shapes. Touching boxes count as overlapping.
    """
    dx = np.asarray(bx) - ax
    dy = np.asarray(by) - ay
    ca, sa = np.cos(ah), np.sin(ah)
    cb, sb = np.cos(bh), np.sin(bh)
    delta = np.asarray(bh) - ah
    c = np.abs(np.cos(delta))
    s = np.abs(np.sin(delta))
    # axes of A
    sep = np.abs(dx * ca + dy * sa) > al + bl * c + bw * s
    sep |= np.abs(-dx * sa + dy * ca) > aw + bl * s + bw * c
    # axes of B
    sep |= np.abs(dx * cb + dy * sb) > al * c + aw * s + bl
    sep |= np.abs(-dx * sb + dy * cb) > al * s + aw * c + bw
    return ~sep


def obb_overlap(a: Obb, b: Obb) -> bool:
    return bool(
        obb_overlap_arrays(
            a.center[0], a.center[1], a.heading, a.half_length, a.half_width,
            b.center[0], b.center[1], b.heading, b.half_length, b.half_width,
        )
    )


def point_segment_distance(px, py, x0, y0, x1, y1):
    """Distance from points to segments plus the clamped segment parameter."""
    ex = x1 - x0
    ey = y1 - y0
    len2 = ex * ex + ey * ey
    num = (px - x0) * ex + (py - y0) * ey
    t = np.clip(num / np.where(len2 > 0.0, len2, 1.0), 0.0, 1.0)
    qx = x0 + t * ex - px
    qy = y0 + t * ey - py
    return np.hypot(qx, qy), t


def segments_intersect_box(x0, y0, x1, y1, cx, cy, heading, hl, hw):
    """Closed test of segments against oriented boxes (Liang-Barsky clip).

    All arguments broadcast against each other.
    """
    c, s = np.cos(heading), np.sin(heading)
    lx0 = (x0 - cx) * c + (y0 - cy) * s
    ly0 = -(x0 - cx) * s + (y0 - cy) * c
    lx1 = (x1 - cx) * c + (y1 - cy) * s
    ly1 = -(x1 - cx) * s + (y1 - cy) * c
    hl = hl + EDGE_EPS
    hw = hw + EDGE_EPS
    dx = lx1 - lx0
    dy = ly1 - ly0
    shape = np.broadcast(lx0, ly0, lx1, ly1, hl, hw).shape
    t0 = np.zeros(shape)
    t1 = np.ones(shape)
    ok = np.ones(shape, dtype=bool)
    for p, q in ((-dx, lx0 + hl), (dx, hl - lx0), (-dy, ly0 + hw), (dy, hw - ly0)):
        parallel = p == 0.0
        ok &= ~(parallel & (q < 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(parallel, 0.0, q / np.where(parallel, 1.0, p))
        t0 = np.where(~parallel & (p < 0.0), np.maximum(t0, r), t0)
        t1 = np.where(~parallel & (p > 0.0), np.minimum(t1, r), t1)
    return ok & (t0 <= t1)


def segment_box_distance(x0, y0, x1, y1, cx, cy, heading, hl, hw):
    """Euclidean distance between segments and an oriented box (0 if touching)."""
    c, s = math.cos(heading), math.sin(heading)
    lx0 = (x0 - cx) * c + (y0 - cy) * s
    ly0 = -(x0 - cx) * s + (y0 - cy) * c
    lx1 = (x1 - cx) * c + (y1 - cy) * s
    ly1 = -(x1 - cx) * s + (y1 - cy) * c

    def to_rect(px, py):
        return np.hypot(np.maximum(np.abs(px) - hl, 0.0), np.maximum(np.abs(py) - hw, 0.0))

    d = np.minimum(to_rect(lx0, ly0), to_rect(lx1, ly1))
    for kx, ky in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)):
        dk, _ = point_segment_distance(kx, ky, lx0, ly0, lx1, ly1)
        d = np.minimum(d, dk)
    hit = segments_intersect_box(lx0, ly0, lx1, ly1, 0.0, 0.0, 0.0, hl, hw)
    return np.where(hit, 0.0, d)


def segments_cross(ax0, ay0, ax1, ay1, bx0, by0, bx1, by1):
    """Closed intersection test between segment arrays (broadcasting)."""

    def orient(px, py, qx, qy, rx, ry):
        return (qx - px) * (ry - py) - (qy - py) * (rx - px)

    def on_seg(px, py, qx, qy, rx, ry):
        return (
            (np.minimum(px, qx) <= rx) & (rx <= np.maximum(px, qx))
            & (np.minimum(py, qy) <= ry) & (ry <= np.maximum(py, qy))
        )

    d1 = orient(bx0, by0, bx1, by1, ax0, ay0)
    d2 = orient(bx0, by0, bx1, by1, ax1, ay1)
    d3 = orient(ax0, ay0, ax1, ay1, bx0, by0)
    d4 = orient(ax0, ay0, ax1, ay1, bx1, by1)
    proper = (((d1 > 0) & (d2 < 0)) | ((d1 < 0) & (d2 > 0))) & (
        ((d3 > 0) & (d4 < 0)) | ((d3 < 0) & (d4 > 0))
    )
    touch = (
        ((d1 == 0) & on_seg(bx0, by0, bx1, by1, ax0, ay0))
        | ((d2 == 0) & on_seg(bx0, by0, bx1, by1, ax1, ay1))
        | ((d3 == 0) & on_seg(ax0, ay0, ax1, ay1, bx0, by0))
        | ((d4 == 0) & on_seg(ax0, ay0, ax1, ay1, bx1, by1))
    )
    return proper | touch


def polylines_intersect(a: np.ndarray, b: np.ndarray) -> bool:
    """True if two open polylines, each shape (n, 2), share any point."""
    if len(a) < 2 or len(b) < 2:
        return False
    amin, amax = a.min(axis=0), a.max(axis=0)
    bmin, bmax = b.min(axis=0), b.max(axis=0)
    if np.any(amin > bmax) or np.any(bmin > amax):
        return False
    A0, A1 = a[:-1, None, :], a[1:, None, :]
    B0, B1 = b[None, :-1, :], b[None, 1:, :]
    hit = segments_cross(
        A0[..., 0], A0[..., 1], A1[..., 0], A1[..., 1],
        B0[..., 0], B0[..., 1], B1[..., 0], B1[..., 1],
    )
    return bool(hit.any())


@dataclass(frozen=True)
class FrenetState:
    """Pose relative to a lane centerline segment.

    ``lateral_offset`` is positive to the left of the lane direction.
    """

    lateral_offset: float
    heading_error: float
    polyline_id: int
    arc_position: float


class LanePath:
    """A polyline with precomputed segment data for fast arc-length queries."""

    def __init__(self, polyline):
        pts = np.asarray(polyline, dtype=float)
        self.points = pts
        self.p0 = pts[:-1]
        self.p0x = np.ascontiguousarray(pts[:-1, 0])
        self.p0y = np.ascontiguousarray(pts[:-1, 1])
        self.last = len(pts) - 2
        d = pts[1:] - pts[:-1]
        self.ex = d[:, 0]
        self.ey = d[:, 1]
        self.seglen = np.hypot(self.ex, self.ey)
        self.inv_len2 = 1.0 / (self.seglen * self.seglen)
        self.cum = np.concatenate([[0.0], np.cumsum(self.seglen)])
        self.direction = np.arctan2(self.ey, self.ex)

    @property
    def length(self) -> float:
        return float(self.cum[-1])

    def project(self, x, y):
        """Arc position, signed lateral offset (left positive), segment index and direction.

        Past either end the arc coordinate keeps growing along the end segment.
        """
        px = np.asarray(x, dtype=float).reshape(-1, 1)
        py = np.asarray(y, dtype=float).reshape(-1, 1)
        rx = px - self.p0x
        ry = py - self.p0y
        t = (rx * self.ex + ry * self.ey) * self.inv_len2
        np.maximum(t, 0.0, out=t)
        np.minimum(t, 1.0, out=t)
        qx = rx - t * self.ex
        qy = ry - t * self.ey
        k = np.argmin(qx * qx + qy * qy, axis=1)
        flat = np.arange(len(k)) * rx.shape[1] + k
        rxk = rx.ravel()[flat]
        ryk = ry.ravel()[flat]
        exk, eyk, lk = self.ex[k], self.ey[k], self.seglen[k]
        cross = (exk * ryk - eyk * rxk) / lk
        along = (rxk * exk + ryk * eyk) / lk
        inside = np.minimum(np.maximum(along, 0.0), lk)
        # perpendicular offset inside a segment, distance to the end vertex outside it
        lateral = np.where(along == inside, cross, np.copysign(np.hypot(along - inside, cross), cross))
        arc = self.cum[k] + inside
        arc = np.where(((k == 0) & (along < 0.0)) | ((k == self.last) & (along > lk)), self.cum[k] + along, arc)
        return arc, lateral, k, self.direction[k]

    def point_at(self, arc):
        """Points at arc positions, extrapolating past both ends."""
        arc = np.asarray(arc, dtype=float)
        k = np.clip(np.searchsorted(self.cum, arc, side="right") - 1, 0, len(self.seglen) - 1)
        frac = (arc - self.cum[k]) / self.seglen[k]
        return self.p0[k, 0] + frac * self.ex[k], self.p0[k, 1] + frac * self.ey[k]


def project_onto_polyline(points: np.ndarray, polyline):
    """Project points (m, 2) onto one polyline (n, 2) or :class:`LanePath`.

    Returns arc position, signed lateral offset (left positive), segment index
    and segment direction for every point.
    """
    path = polyline if isinstance(polyline, LanePath) else LanePath(polyline)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return path.project(pts[:, 0], pts[:, 1])


def polyline_point_at(polyline, arc) -> tuple[np.ndarray, np.ndarray]:
    """Points at arc positions along a polyline, extrapolating past both ends."""
    path = polyline if isinstance(polyline, LanePath) else LanePath(polyline)
    return path.point_at(arc)


class MapIndex:
    """Segment arrays of a scenario map with a uniform grid for nearest queries.

    Built once per scenario; all queries are read-only.
    """

    LANE = 0
    EDGE = 1

    def __init__(self, polylines: Iterable[tuple[int, int, np.ndarray]], cell_size: float = 10.0):
        starts, ends, pids, kinds, arcs = [], [], [], [], []
        self.polylines: dict[int, np.ndarray] = {}
        self.polyline_kind: dict[int, int] = {}
        for pid, kind, pts in polylines:
            pts = np.asarray(pts, dtype=float)
            self.polylines[pid] = pts
            self.polyline_kind[pid] = kind
            seg = np.hypot(*(pts[1:] - pts[:-1]).T)
            starts.append(pts[:-1])
            ends.append(pts[1:])
            pids.append(np.full(len(seg), pid))
            kinds.append(np.full(len(seg), kind))
            arcs.append(np.concatenate([[0.0], np.cumsum(seg)[:-1]]))
        if starts:
            self.start = np.concatenate(starts)
            self.end = np.concatenate(ends)
            self.poly_id = np.concatenate(pids).astype(int)
            self.kind = np.concatenate(kinds).astype(int)
            self.arc0 = np.concatenate(arcs)
        else:
            self.start = self.end = np.zeros((0, 2))
            self.poly_id = self.kind = np.zeros(0, dtype=int)
            self.arc0 = np.zeros(0)
        d = self.end - self.start
        self.seg_len = np.hypot(d[:, 0], d[:, 1])
        self.seg_dir = np.arctan2(d[:, 1], d[:, 0])
        self.midpoint = 0.5 * (self.start + self.end)
        self.cell = float(cell_size)
        self._paths: dict[int, LanePath] = {}
        self.lane_ids = np.flatnonzero(self.kind == self.LANE)
        self.edge_ids = np.flatnonzero(self.kind == self.EDGE)
        self._grid = {self.LANE: self._build_grid(self.lane_ids), self.EDGE: self._build_grid(self.edge_ids)}
        if len(self.start):
            lo = np.minimum(self.start, self.end).min(axis=0)
            hi = np.maximum(self.start, self.end).max(axis=0)
            self._cell_lo = np.floor(lo / self.cell).astype(int)
            self._cell_hi = np.floor(hi / self.cell).astype(int)
        else:
            self._cell_lo = self._cell_hi = np.zeros(2, dtype=int)

    @classmethod
    def from_scenario(cls, scenario, cell_size: float = 10.0) -> "MapIndex":
        from .scenario import PolylineKind

        return cls(
            (
                (p.polyline_id, cls.LANE if p.kind is PolylineKind.LANE_CENTER else cls.EDGE, np.asarray(p.points))
                for p in scenario.map
            ),
            cell_size,
        )

    def lane_path(self, polyline_id: int) -> LanePath:
        path = self._paths.get(polyline_id)
        if path is None:
            path = self._paths[polyline_id] = LanePath(self.polylines[polyline_id])
        return path

    def _build_grid(self, ids: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
        cells: dict[tuple[int, int], list[int]] = {}
        for i in ids:
            lo = np.floor(np.minimum(self.start[i], self.end[i]) / self.cell).astype(int)
            hi = np.floor(np.maximum(self.start[i], self.end[i]) / self.cell).astype(int)
            for cx in range(lo[0], hi[0] + 1):
                for cy in range(lo[1], hi[1] + 1):
                    cells.setdefault((cx, cy), []).append(int(i))
        return {k: np.asarray(v, dtype=int) for k, v in cells.items()}

    @property
    def has_lanes(self) -> bool:
        return len(self.lane_ids) > 0

    def candidates_in_box(self, kind: int, lo: Sequence[float], hi: Sequence[float]) -> np.ndarray:
        """Sorted segment ids of ``kind`` registered in cells overlapping a rectangle."""
        grid = self._grid[kind]
        c0 = np.floor(np.asarray(lo) / self.cell).astype(int)
        c1 = np.floor(np.asarray(hi) / self.cell).astype(int)
        c0 = np.maximum(c0, self._cell_lo)
        c1 = np.minimum(c1, self._cell_hi)
        found = [
            grid[(cx, cy)]
            for cx in range(c0[0], c1[0] + 1)
            for cy in range(c0[1], c1[1] + 1)
            if (cx, cy) in grid
        ]
        if not found:
            return np.zeros(0, dtype=int)
        return np.unique(np.concatenate(found))

    def nearest_lane_segment(self, x: float, y: float) -> tuple[int, float, float]:
        """Nearest lane segment id, its distance and clamped parameter.

        Ties resolve to the lowest segment id.
        """
        if not self.has_lanes:
            raise NoLaneError("map has no lane centerlines")
        grid = self._grid[self.LANE]
        qc = np.floor(np.array([x, y]) / self.cell).astype(int)
        max_r = int(max(np.abs(qc - self._cell_lo).max(), np.abs(qc - self._cell_hi).max()))
        best = (math.inf, -1, 0.0)
        seen: set[int] = set()
        for r in range(max_r + 1):
            ring = []
            for cx in range(qc[0] - r, qc[0] + r + 1):
                for cy in range(qc[1] - r, qc[1] + r + 1):
                    if max(abs(cx - qc[0]), abs(cy - qc[1])) != r:
                        continue
                    ids = grid.get((cx, cy))
                    if ids is not None:
                        ring.append(ids)
            if ring:
                ids = np.setdiff1d(np.concatenate(ring), np.fromiter(seen, dtype=int, count=len(seen)))
                if len(ids):
                    seen.update(ids.tolist())
                    d, t = point_segment_distance(
                        x, y, self.start[ids, 0], self.start[ids, 1], self.end[ids, 0], self.end[ids, 1]
                    )
                    j = int(np.argmin(d))
                    cand = (float(d[j]), int(ids[j]), float(t[j]))
                    if cand[0] < best[0] or (cand[0] == best[0] and cand[1] < best[1]):
                        best = cand
            # anything not yet seen lies at least r cells away
            if best[1] >= 0 and best[0] <= r * self.cell:
                break
        if best[1] < 0:
            ids = self.lane_ids
            d, t = point_segment_distance(
                x, y, self.start[ids, 0], self.start[ids, 1], self.end[ids, 0], self.end[ids, 1]
            )
            j = int(np.argmin(d))
            best = (float(d[j]), int(ids[j]), float(t[j]))
        return best[1], best[0], best[2]

    def frenet(self, x: float, y: float, heading: float) -> FrenetState:
        seg, dist, t = self.nearest_lane_segment(x, y)
        ex, ey = self.end[seg] - self.start[seg]
        rx, ry = x - self.start[seg, 0], y - self.start[seg, 1]
        sign = 1.0 if ex * ry - ey * rx >= 0.0 else -1.0
        return FrenetState(
            lateral_offset=sign * dist,
            heading_error=wrap_angle(heading - self.seg_dir[seg]),
            polyline_id=int(self.poly_id[seg]),
            arc_position=float(self.arc0[seg] + t * self.seg_len[seg]),
        )

    def frenet_arrays(self, x, y, heading, radius: float = 10.0):
        """Vectorized :meth:`frenet`: (lateral offset, heading error, segment id) arrays."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        heading = np.broadcast_to(np.asarray(heading, dtype=float), x.shape)
        if not self.has_lanes:
            raise NoLaneError("map has no lane centerlines")
        seg = np.full(x.shape, -1, dtype=int)
        if x.size:
            ids = self.candidates_in_box(
                self.LANE, (x.min() - radius, y.min() - radius), (x.max() + radius, y.max() + radius)
            )
            if len(ids):
                d, _ = point_segment_distance(
                    x[:, None], y[:, None],
                    self.start[ids, 0], self.start[ids, 1], self.end[ids, 0], self.end[ids, 1],
                )
                j = np.argmin(d, axis=1)
                # a segment outside the searched box is farther than radius
                ok = d[np.arange(len(x)), j] <= radius
                seg[ok] = ids[j[ok]]
        for k in np.flatnonzero(seg < 0):
            seg[k] = self.nearest_lane_segment(float(x[k]), float(y[k]))[0]
        d, _ = point_segment_distance(x, y, self.start[seg, 0], self.start[seg, 1], self.end[seg, 0], self.end[seg, 1])
        ex, ey = (self.end[seg] - self.start[seg]).T
        rx, ry = x - self.start[seg, 0], y - self.start[seg, 1]
        sign = np.where(ex * ry - ey * rx >= 0.0, 1.0, -1.0)
        return sign * d, wrap_angle(heading - self.seg_dir[seg]), seg

    def crosses_road_edge(self, box: Obb) -> bool:
        corners = box.corners()
        ids = self.candidates_in_box(self.EDGE, corners.min(axis=0), corners.max(axis=0))
        if not len(ids):
            return False
        hit = segments_intersect_box(
            self.start[ids, 0], self.start[ids, 1], self.end[ids, 0], self.end[ids, 1],
            box.center[0], box.center[1], box.heading, box.half_length, box.half_width,
        )
        return bool(hit.any())

    def boxes_cross_edges(self, cx, cy, heading, hl, hw) -> np.ndarray:
        """Road-edge crossing flags for many boxes at once (arrays of equal length)."""
        cx = np.asarray(cx, dtype=float)
        cy = np.asarray(cy, dtype=float)
        out = np.zeros(cx.shape, dtype=bool)
        if not len(self.edge_ids) or not cx.size:
            return out
        reach = np.hypot(hl, hw)
        rmax = float(np.max(reach))
        ids = self.candidates_in_box(
            self.EDGE, (cx.min() - rmax, cy.min() - rmax), (cx.max() + rmax, cy.max() + rmax)
        )
        if not len(ids):
            return out
        shape = cx.shape
        return boxes_cross_segments(
            cx, cy,
            np.ascontiguousarray(np.broadcast_to(heading, shape), dtype=float),
            np.ascontiguousarray(np.broadcast_to(hl, shape), dtype=float),
            np.ascontiguousarray(np.broadcast_to(hw, shape), dtype=float),
            self.start[ids, 0], self.start[ids, 1], self.end[ids, 0], self.end[ids, 1], EDGE_EPS,
        )

    def lanes_overlapping(self, box: Obb, lane_half_width: float) -> set[int]:
        """Ids of lane polylines whose lane area (centerline +- half width) touches ``box``."""
        reach = math.hypot(box.half_length, box.half_width) + lane_half_width
        cx, cy = box.center
        ids = self.candidates_in_box(self.LANE, (cx - reach, cy - reach), (cx + reach, cy + reach))
        if not len(ids):
            return set()
        d = segment_box_distance(
            self.start[ids, 0], self.start[ids, 1], self.end[ids, 0], self.end[ids, 1],
            cx, cy, box.heading, box.half_length, box.half_width,
        )
        return {int(p) for p in self.poly_id[ids[d <= lane_half_width]]}


def project_to_nearest_lane(point: tuple[float, float], heading: float, map_index: MapIndex) -> FrenetState:
    """Frenet coordinates of a pose relative to its nearest lane segment."""
    return map_index.frenet(float(point[0]), float(point[1]), float(heading))


def crosses_road_edge(footprint: Obb, map_index: MapIndex) -> bool:
    return map_index.crosses_road_edge(footprint)
