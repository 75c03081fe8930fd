"""Compiled inner loops for the IDM proposal rollouts."""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from .traffic.idm import GAP_EPS, LOOKAHEAD_MIN, LOOKAHEAD_TIME


@nb.njit(cache=True)
def _wrap(a):
    if -math.pi < a <= math.pi:
        return a
    w = np.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


@nb.njit(cache=True)
def _project(px, py, p0x, p0y, ex, ey, seglen, cum):
    """Arc position of one point on a polyline (nearest segment, first on ties)."""
    best = np.inf
    k = 0
    for s in range(len(p0x)):
        rx = px - p0x[s]
        ry = py - p0y[s]
        t = (rx * ex[s] + ry * ey[s]) / (seglen[s] * seglen[s])
        t = min(max(t, 0.0), 1.0)
        qx = rx - t * ex[s]
        qy = ry - t * ey[s]
        d2 = qx * qx + qy * qy
        if d2 < best:
            best = d2
            k = s
    rx = px - p0x[k]
    ry = py - p0y[k]
    along = (rx * ex[k] + ry * ey[k]) / seglen[k]
    if (k == 0 and along < 0.0) or (k == len(p0x) - 1 and along > seglen[k]):
        return cum[k] + along
    return cum[k] + min(max(along, 0.0), seglen[k])


@nb.njit(cache=True)
def _point_at(arc, p0x, p0y, ex, ey, seglen, cum):
    k = np.searchsorted(cum, arc, side="right") - 1
    k = min(max(k, 0), len(seglen) - 1)
    frac = (arc - cum[k]) / seglen[k]
    return p0x[k] + frac * ex[k], p0y[k] + frac * ey[k]


@nb.njit(cache=True)
def idm_rollouts(
    x0, y0, h0, v0, targets, gx, gy, goal_arrival_speed, goal_radius,
    a, b, s0, time_gap, delta,
    p0x, p0y, ex, ey, seglen, cum,
    agent_arc, agent_in_corridor, agent_vlong, agent_x, agent_y, ego_half_length, agent_half_length,
    acc_lo, acc_hi, steer_lo, steer_hi, wheelbase, dt, v_min, v_max, steps,
):
    """Lane-following IDM rollouts, one per target speed.

    Agent arrays have shape (steps, M) and describe the other agents at
    each rollout step. Returns trajectories (n, steps, 4), steering (n,
    steps) and the first (acceleration, steering) of each rollout.
    """
    n = len(targets)
    m = agent_arc.shape[1]
    traj = np.empty((n, steps, 4))
    steers = np.empty((n, steps))
    first = np.empty((n, 2))
    sqrt_ab2 = 2.0 * math.sqrt(a * b)
    for i in range(n):
        x, y, h, v = x0, y0, h0, v0
        for k in range(steps):
            dgoal = math.hypot(gx - x, gy - y)
            desired = min(targets[i], math.sqrt(goal_arrival_speed**2 + 2.0 * b * max(dgoal - goal_radius, 0.0)))
            desired = max(desired, GAP_EPS)
            acc = a * (1.0 - (v / desired) ** delta)
            arc = _project(x, y, p0x, p0y, ex, ey, seglen, cum)
            lead = -1
            lead_arc = np.inf
            for j in range(m):
                if agent_in_corridor[k, j] and agent_arc[k, j] > arc and agent_arc[k, j] < lead_arc:
                    lead_arc = agent_arc[k, j]
                    lead = j
            if lead >= 0:
                dist = math.hypot(agent_x[k, lead] - x, agent_y[k, lead] - y)
                gap = max(dist - ego_half_length - agent_half_length[lead], GAP_EPS)
                vl = agent_vlong[k, lead]
                s_star = s0 + max(0.0, v * time_gap + v * (v - vl) / sqrt_ab2)
                acc -= a * (s_star / gap) ** 2
            acc = min(max(acc, acc_lo), acc_hi)
            look = max(LOOKAHEAD_MIN, LOOKAHEAD_TIME * v)
            tx, ty = _point_at(arc + look, p0x, p0y, ex, ey, seglen, cum)
            dx = tx - x
            dy = ty - y
            c = math.cos(h)
            s = math.sin(h)
            lx = dx * c + dy * s
            ly = -dx * s + dy * c
            curvature = 2.0 * ly / max(lx * lx + ly * ly, 1e-9)
            steer = min(max(math.atan(wheelbase * curvature), steer_lo), steer_hi)
            if k == 0:
                first[i, 0] = acc
                first[i, 1] = steer
            v = min(max(v + acc * dt, v_min), v_max)
            x = x + v * math.cos(h) * dt
            y = y + v * math.sin(h) * dt
            h = _wrap(h + v / wheelbase * math.tan(steer) * dt)
            traj[i, k, 0] = x
            traj[i, k, 1] = y
            traj[i, k, 2] = h
            traj[i, k, 3] = v
            steers[i, k] = steer
    return traj, steers, first
