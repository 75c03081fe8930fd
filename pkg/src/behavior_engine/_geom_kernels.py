"""Compiled per-step geometry checks (same tests as the numpy versions in geometry)."""
from __future__ import annotations

import math

import numba as nb
import numpy as np


@nb.njit(cache=True)
def _segment_hits_box(x0, y0, x1, y1, cx, cy, c, s, hl, hw):
    lx0 = (x0 - cx) * c + (y0 - cy) * s
    ly0 = -(x0 - cx) * s + (y0 - cy) * c
    lx1 = (x1 - cx) * c + (y1 - cy) * s
    ly1 = -(x1 - cx) * s + (y1 - cy) * c
    dx = lx1 - lx0
    dy = ly1 - ly0
    t0 = 0.0
    t1 = 1.0
    for k in range(4):
        if k == 0:
            p, q = -dx, lx0 + hl
        elif k == 1:
            p, q = dx, hl - lx0
        elif k == 2:
            p, q = -dy, ly0 + hw
        else:
            p, q = dy, hw - ly0
        if p == 0.0:
            if q < 0.0:
                return False
            continue
        r = q / p
        if p < 0.0:
            t0 = max(t0, r)
        else:
            t1 = min(t1, r)
    return t0 <= t1


@nb.njit(cache=True)
def boxes_cross_segments(cx, cy, heading, hl, hw, x0, y0, x1, y1, eps):
    """Per-box flag: some segment within reach touches the box (closed test)."""
    n = len(cx)
    out = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        reach = math.hypot(hl[i], hw[i]) + eps
        c = math.cos(heading[i])
        s = math.sin(heading[i])
        for j in range(len(x0)):
            ex = x1[j] - x0[j]
            ey = y1[j] - y0[j]
            len2 = ex * ex + ey * ey
            t = ((cx[i] - x0[j]) * ex + (cy[i] - y0[j]) * ey) / (len2 if len2 > 0.0 else 1.0)
            t = min(max(t, 0.0), 1.0)
            if math.hypot(x0[j] + t * ex - cx[i], y0[j] + t * ey - cy[i]) > reach:
                continue
            if _segment_hits_box(x0[j], y0[j], x1[j], y1[j], cx[i], cy[i], c, s, hl[i] + eps, hw[i] + eps):
                out[i] = True
                break
    return out


@nb.njit(cache=True)
def overlapping_pairs(x, y, h, hl, hw, replay):
    """Index pairs (i < j) of overlapping boxes, skipping replay-replay pairs; row-major order."""
    n = len(x)
    a = np.empty(n * (n - 1) // 2, dtype=np.int64)
    b = np.empty(n * (n - 1) // 2, dtype=np.int64)
    m = 0
    for i in range(n):
        ri = math.hypot(hl[i], hw[i])
        ca = math.cos(h[i])
        sa = math.sin(h[i])
        for j in range(i + 1, n):
            if replay[i] and replay[j]:
                continue
            dx = x[j] - x[i]
            dy = y[j] - y[i]
            rj = math.hypot(hl[j], hw[j])
            if dx * dx + dy * dy > (ri + rj) ** 2:
                continue
            cb = math.cos(h[j])
            sb = math.sin(h[j])
            delta = h[j] - h[i]
            c = abs(math.cos(delta))
            s = abs(math.sin(delta))
            if abs(dx * ca + dy * sa) > hl[i] + hl[j] * c + hw[j] * s:
                continue
            if abs(-dx * sa + dy * ca) > hw[i] + hl[j] * s + hw[j] * c:
                continue
            if abs(dx * cb + dy * sb) > hl[i] * c + hw[i] * s + hl[j]:
                continue
            if abs(-dx * sb + dy * cb) > hl[i] * s + hw[i] * c + hw[j]:
                continue
            a[m] = i
            b[m] = j
            m += 1
    return a[:m], b[:m]
