"""Second, deliberately naive transcriptions of the scoring formulas.

Nothing here imports the package's formula code: the oracles work on plain
numbers, loops and shapely geometry so that agreement with the package is
evidence rather than tautology.
"""
from __future__ import annotations

import math

import numpy as np
from shapely.geometry import LineString, Point, Polygon


def wrap(a):
    return math.atan2(math.sin(a), math.cos(a))


def box_polygon(x, y, h, length, width):
    c, s = math.cos(h), math.sin(h)
    pts = []
    for u, v in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
        lx, ly = u * length / 2, v * width / 2
        pts.append((x + lx * c - ly * s, y + lx * s + ly * c))
    return Polygon(pts)


# --- benchmark score ------------------------------------------------------


def comfort(accel, jerk):
    steps = len(accel)
    v = 0
    for t in range(steps):
        if abs(accel[t][0]) > 3.0:
            v += 1
        if abs(accel[t][1]) > 3.0:
            v += 1
        if max(abs(jerk[t][0]), abs(jerk[t][1])) > 5.0:
            v += 1
    return 1.0 - min(v / (3.0 * steps), 1.0)


def straight_lane_frenet(x, y, h, lane_ys):
    """(lateral, heading error) against the nearest of several lanes along +x."""
    best = None
    for ly in lane_ys:
        d = y - ly
        if best is None or abs(d) < abs(best):
            best = d
    return best, wrap(h)


def lanes_touched(x, y, h, length, width, lane_lines, half_width=1.75):
    box = box_polygon(x, y, h, length, width)
    return sum(1 for line in lane_lines if box.distance(line) <= half_width)


def at_fault(log, step, other, lane_lines):
    """True if the ego is to blame for its contact with ``other`` at ``step``."""
    e = log.ego_index
    ex, ey, eh, ev = log.states[step, e]
    ox, oy, oh, ov = log.states[step, other]
    el, ew = log.lengths[e], log.widths[e]
    ol = log.lengths[other]

    window = log.states[max(0, step - 10) : step + 1, e]
    drift = 0.0
    if len(window) >= 2:
        x0, y0, h0 = window[0, 0], window[0, 1], window[0, 2]
        dx, dy = window[-1, 0] - x0, window[-1, 1] - y0
        drift = abs(dy * math.cos(h0) - dx * math.sin(h0))
    lane_change = lanes_touched(ex, ey, eh, el, ew, lane_lines) >= 2 and drift > 0.3

    if log.kinds[other].value in ("pedestrian", "cyclist"):
        return True
    if ev < 0.1:
        return False
    if ov < 0.1:
        return True
    bearing = abs(wrap(math.atan2(oy - ey, ox - ex) - eh))
    if step > 0:
        px, py = log.states[step - 1, e, :2]
        qx, qy = log.states[step - 1, other, :2]
        gap_before = math.dist((px, py), (qx, qy)) - (el + ol) / 2
        gap_now = math.dist((ex, ey), (ox, oy)) - (el + ol) / 2
        closing = (gap_before - gap_now) / log.dt
    else:
        dist = math.dist((ex, ey), (ox, oy))
        ux, uy = (ox - ex) / dist, (oy - ey) / dist
        closing = (ev * math.cos(eh) - ov * math.cos(oh)) * ux + (ev * math.sin(eh) - ov * math.sin(oh)) * uy
    if bearing <= math.radians(30) and closing > 0.5:
        return True
    return lane_change


def score(log, lane_ys, x_range=(-1e3, 1e3)):
    """Dict of subscores and the combined score for a log on straight +x lanes."""
    T = log.steps_alive
    e = log.ego_index
    lines = [LineString([(x_range[0], ly), (x_range[1], ly)]) for ly in lane_ys]
    if T >= 1:
        cmf = comfort(log.ego_accel[:T].tolist(), log.ego_jerk[:T].tolist())
        aligned = 0
        offsets = 0.0
        for t in range(1, T + 1):
            x, y, h, _ = log.states[t, e]
            d, herr = straight_lane_frenet(x, y, h, lane_ys)
            aligned += abs(herr) < math.pi / 12
            offsets += abs(d)
        align = aligned / T
        ctr = 1.0 - min(offsets / T / 2.0, 1.0)
    else:
        cmf = align = ctr = 0.0
    af = 0
    for ev in log.collisions:
        if e in (ev.a, ev.b):
            other = ev.b if ev.a == e else ev.a
            af = max(af, int(at_fault(log, ev.step, other, lines)))
    term = log.terminals[e]
    off = int(term is not None and term.value == "off_road")
    goal = int(term is not None and term.value == "goal_reached")
    combined = (1 - af) * (1 - off) * goal * (0.2 * cmf + 0.5 * align + 0.3 * ctr)
    return {"s_cmf": cmf, "s_align": align, "s_ctr": ctr, "af_collision": af, "off_road": off, "goal": goal, "combined": combined}


# --- reward ---------------------------------------------------------------


def reward(ctx: dict, c: dict) -> float:
    """Sum of the nine per-step terms; ``c`` also carries velocity/timestep."""
    v = ctx["speed"]
    dt = ctx["dt"]
    th = ctx["heading_error"]
    xf = ctx["lateral_offset"]
    r = 0.0
    if ctx["goal_distance"] < c["delta_goal"] and abs(v) < c["v_goal"]:
        r += 1.0
    if ctx["collided"]:
        r += -(c["collision"] + 0.1 * abs(v))
    if ctx["off_road"]:
        r += -c["boundary"]
    n = 0
    if abs(ctx["a_long"]) > 3:
        n += 1
    if abs(ctx["a_lat"]) > 3:
        n += 1
    if abs(ctx["jerk_long"]) > 5 or abs(ctx["jerk_lat"]) > 5:
        n += 1
    r += -c["comfort"] * n
    r += c["l_align"] * dt * (
        min(math.cos(th), 0.0) + c["vel_align"] * min(math.cos(th) * v, 0.0) + 0.0025 * (1 - abs(th) / (math.pi / 2))
    )
    dev = abs(xf - c["center_bias"])
    indicator = 1.0 if math.cos(th) > 0.5 else 0.0
    r += -c["l_center"] * dt * (indicator * dev - 0.05 / math.exp(dev - 0.5))
    if abs(v) > 2.5:
        r += c["velocity"] * dt * max(math.cos(th), 0.0)
    if v < 0:
        r += -c["reverse"] * dt
    if abs(v) > 0 or ctx["a_long"] != 0 or ctx["a_lat"] != 0:
        r += -c["timestep"] * dt
    return r


COMPLEX = {
    "v_goal": 100.0, "delta_goal": 2.0, "collision": 3.0, "boundary": 3.0, "comfort": 0.05,
    "l_align": 0.025, "vel_align": 1.0, "l_center": 0.0038, "center_bias": 0.0,
    "velocity": 0.0025, "reverse": 0.005, "timestep": 2.5e-5,
}


# --- intelligent driver model ---------------------------------------------


def idm(v, s, dv_or_none, v0=15.0, s0=1.0, T=1.5, a=1.0, b=2.0, delta=4.0):
    """dv/dt for speed v, gap s and approach rate v - v_leader (None: free road)."""
    if s is None:
        return a * (1 - (v / v0) ** delta)
    s_star = s0 + max(0.0, v * T + v * dv_or_none / (2 * math.sqrt(a * b)))
    return a * (1 - (v / v0) ** delta - (s_star / s) ** 2)


# --- interactivity score ---------------------------------------------------

WEIGHTS = {"cross": 0.30, "accel": 0.15, "steer": 0.15, "ttc": 0.20, "agents": 0.10, "goal": 0.10}
TAUS = {"cross": 4.0, "accel": 60.0, "steer": 0.1, "ttc": 60.0, "agents": 10.0, "goal": 100.0}


def s_int(raw: dict, lane_change: bool) -> float:
    lam = 1.0 if lane_change else 0.5
    return lam * sum(WEIGHTS[k] * min(raw[k] / TAUS[k], 1.0) for k in WEIGHTS)


def interactivity_raw(scenario) -> dict:
    """Raw components by direct per-step loops (same definitions, new code)."""
    e = scenario.ego_index
    agents = scenario.agents
    ego = agents[e]
    dt = scenario.dt
    frames = max(len(a.logged_states) for a in agents)

    def state(i, t):
        ls = agents[i].logged_states
        return ls[t] if t < len(ls) else None

    ego_line = [(s.x, s.y) for s in ego.logged_states]
    cross = 0
    for i, a in enumerate(agents):
        if i == e:
            continue
        pts = [(s.x, s.y) for s in a.logged_states]
        g1 = LineString(ego_line) if len(ego_line) > 1 else Point(ego_line[0])
        g2 = LineString(pts) if len(pts) > 1 else Point(pts[0])
        cross += g1.intersects(g2)

    nearest = []
    for t in range(frames):
        es = state(e, t)
        best = math.inf
        for i in range(len(agents)):
            s = state(i, t)
            if i == e or s is None or es is None:
                continue
            best = min(best, math.hypot(s.x - es.x, s.y - es.y))
        nearest.append(best)

    wb = 0.8 * ego.length
    acc, steer = [], []
    ls = ego.logged_states
    for t in range(1, len(ls)):
        acc.append((ls[t].speed - ls[t - 1].speed) / dt)
        rate = wrap(ls[t].heading - ls[t - 1].heading) / dt
        v = ls[t].speed
        steer.append(math.atan(wb * rate / v) if abs(v) > 0.1 else 0.0)

    def weighted(vals):
        total = 0.0
        for j in range(1, len(vals)):
            # vals[j] belongs to frame j + 1
            total += abs(vals[j] - vals[j - 1]) / max(nearest[j + 1], 1.0)
        return total

    ttc_steps = 0
    for t in range(frames):
        es = state(e, t)
        if es is None:
            continue
        hit = False
        for i in range(len(agents)):
            s = state(i, t)
            if i == e or s is None:
                continue
            dx, dy = s.x - es.x, s.y - es.y
            dist = math.hypot(dx, dy)
            if dist == 0:
                continue
            rvx = es.speed * math.cos(es.heading) - s.speed * math.cos(s.heading)
            rvy = es.speed * math.sin(es.heading) - s.speed * math.sin(s.heading)
            closing = (rvx * dx + rvy * dy) / dist
            if closing <= 0:
                continue
            gap = dist - (ego.length + agents[i].length) / 2
            ttc = gap / closing if gap > 0 else 0.0
            if ttc < 3.0:
                hit = True
        ttc_steps += hit

    s0 = ls[0]
    near = 0
    for i, a in enumerate(agents):
        if i != e and math.hypot(a.logged_states[0].x - s0.x, a.logged_states[0].y - s0.y) <= 40.0:
            near += 1
    gx, gy = scenario.goal.position
    return {
        "cross": float(cross),
        "accel": weighted(acc),
        "steer": weighted(steer),
        "ttc": float(ttc_steps),
        "agents": float(near),
        "goal": math.hypot(gx - s0.x, gy - s0.y),
    }


def sample_points_overlap(a, b, n=120):
    """Dense point-sampling overlap test of two (x, y, h, length, width) boxes."""
    pa = box_polygon(*a)
    pb = box_polygon(*b)
    minx, miny, maxx, maxy = pa.bounds
    xs = np.linspace(minx, maxx, n)
    ys = np.linspace(miny, maxy, n)
    from shapely import contains_xy

    gx, gy = np.meshgrid(xs, ys)
    inside_a = contains_xy(pa, gx, gy)
    inside_b = contains_xy(pb, gx, gy)
    return bool((inside_a & inside_b).any())
