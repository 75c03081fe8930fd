"""Interactivity score and the interactive / random scenario splits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .dynamics import WHEELBASE_RATIO
from .geometry import NoLaneError, polylines_intersect, wrap_angle
from .scenario import Scenario

COMPONENTS = ("cross", "accel", "steer", "ttc", "agents", "goal")
DEFAULT_WEIGHTS = {"cross": 0.30, "accel": 0.15, "steer": 0.15, "ttc": 0.20, "agents": 0.10, "goal": 0.10}
DEFAULT_THRESHOLDS = {"cross": 4.0, "accel": 60.0, "steer": 0.1, "ttc": 60.0, "agents": 10.0, "goal": 100.0}
TTC_LIMIT = 3.0
NEARBY_RADIUS = 40.0
MIN_PROXIMITY = 1.0
TURN_ANGLE = math.pi / 4
# below this speed the steering angle is not recoverable from the heading rate
STEER_MIN_SPEED = 0.1
REPORT_PERCENTILES = (75.0, 90.0)


class Excluded(ValueError):
    """The scenario fails an exclusion rule; ``reason`` says which."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class NotEnoughScenarios(ValueError):
    pass


@dataclass(frozen=True)
class CurationConfig:
    weights: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    lane_change_multiplier: float = 1.0
    default_multiplier: float = 0.5
    min_goal_distance: float = 10.0
    min_agents: int = 3

    def __post_init__(self):
        for name, table in (("weights", self.weights), ("thresholds", self.thresholds)):
            if set(table) != set(COMPONENTS):
                raise ValueError(f"{name} must have exactly the components {COMPONENTS}")
        if abs(math.fsum(self.weights.values()) - 1.0) > 1e-12:
            raise ValueError("component weights must sum to 1")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("component weights must be non-negative")
        if any(not t > 0 for t in self.thresholds.values()):
            raise ValueError("component thresholds must be positive")
        if not 0 <= self.default_multiplier <= self.lane_change_multiplier <= 1:
            raise ValueError("multipliers must satisfy 0 <= default <= lane change <= 1")


@dataclass(frozen=True)
class InteractivityReport:
    scenario_id: str
    raw: dict
    normalized: dict
    lambda_lane: float
    score: float

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "raw": {k: float(v) for k, v in self.raw.items()},
            "normalized": {k: float(v) for k, v in self.normalized.items()},
            "lambda_lane": self.lambda_lane,
            "score": self.score,
        }


def combine_components(raw: dict, lambda_lane: float, cfg: CurationConfig) -> tuple[dict, float]:
    """Normalized components and the multiplier-scaled weighted sum."""
    normalized = {c: min(raw[c] / cfg.thresholds[c], 1.0) for c in COMPONENTS}
    total = math.fsum(cfg.weights[c] * normalized[c] for c in COMPONENTS)
    return normalized, lambda_lane * total


def _positions(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """States (F, N, 4) padded with NaN where a track has ended, and the valid mask."""
    frames = max(len(a.logged_states) for a in scenario.agents)
    out = np.full((frames, len(scenario.agents), 4), np.nan)
    for i, a in enumerate(scenario.agents):
        out[: len(a.logged_states), i] = [(s.x, s.y, s.heading, s.speed) for s in a.logged_states]
    return out, ~np.isnan(out[..., 0])


def trajectory_crossings(scenario: Scenario) -> int:
    """Agents (any kind) whose logged path shares a point with the ego's."""
    e = scenario.ego_index
    ego_path = np.array([(s.x, s.y) for s in scenario.agents[e].logged_states])
    count = 0
    for i, a in enumerate(scenario.agents):
        if i == e:
            continue
        path = np.array([(s.x, s.y) for s in a.logged_states])
        count += polylines_intersect(ego_path, path)
    return count


def ego_controls(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Acceleration and steering per logged step, recovered from ego poses.

    Both arrays are aligned with steps 1..F-1. Steering inverts the bicycle
    heading rate and is 0 while the ego is nearly stopped.
    """
    ego = scenario.ego
    states = np.array([(s.heading, s.speed) for s in ego.logged_states])
    dt = scenario.dt
    accel = np.diff(states[:, 1]) / dt
    rate = wrap_angle(np.diff(states[:, 0])) / dt
    v = states[1:, 1]
    wheelbase = WHEELBASE_RATIO * ego.length
    with np.errstate(divide="ignore", invalid="ignore"):
        steer = np.where(np.abs(v) > STEER_MIN_SPEED, np.arctan(wheelbase * rate / v), 0.0)
    return accel, steer


def _nearest_distance(states: np.ndarray, valid: np.ndarray, e: int) -> np.ndarray:
    """Center distance from the ego to the nearest other valid agent per step."""
    d = np.hypot(states[..., 0] - states[:, e : e + 1, 0], states[..., 1] - states[:, e : e + 1, 1])
    d = np.where(valid, d, np.inf)
    d[:, e] = np.inf
    return d.min(axis=1)


def proximity_weighted_changes(values: np.ndarray, nearest: np.ndarray) -> float:
    """Sum of |step-to-step change| divided by the (floored) nearest distance.

    ``values`` is aligned with steps 1..F-1 and ``nearest`` with steps
    0..F-1; the change between steps t-1 and t is weighted at step t.
    """
    if len(values) < 2:
        return 0.0
    change = np.abs(np.diff(values))
    weight = np.maximum(nearest[2 : 2 + len(change)], MIN_PROXIMITY)
    return float(np.sum(change / weight))


def ttc_critical_steps(scenario: Scenario, states: np.ndarray, valid: np.ndarray) -> int:
    """Steps where some approaching agent is less than the TTC limit away."""
    e = scenario.ego_index
    lengths = np.array([a.length for a in scenario.agents])
    vx = states[..., 3] * np.cos(states[..., 2])
    vy = states[..., 3] * np.sin(states[..., 2])
    dx = states[..., 0] - states[:, e : e + 1, 0]
    dy = states[..., 1] - states[:, e : e + 1, 1]
    dist = np.hypot(dx, dy)
    with np.errstate(divide="ignore", invalid="ignore"):
        closing = ((vx[:, e : e + 1] - vx) * dx + (vy[:, e : e + 1] - vy) * dy) / dist
        gap = dist - 0.5 * (lengths[e] + lengths)
        ttc = np.where(gap > 0.0, gap / closing, 0.0)
    critical = valid & valid[:, e : e + 1] & (closing > 0.0) & (ttc < TTC_LIMIT)
    critical[:, e] = False
    return int(critical.any(axis=1).sum())


def lane_change_required(scenario: Scenario) -> bool:
    """Goal on a different lane than the start, or a net expert turn beyond 45 degrees."""
    ego = scenario.ego
    heading = np.array([s.heading for s in ego.logged_states])
    turn = abs(float(np.sum(wrap_angle(np.diff(heading)))))
    if turn > TURN_ANGLE:
        return True
    m = scenario.map_index()
    try:
        start, _, _ = m.nearest_lane_segment(ego.logged_states[0].x, ego.logged_states[0].y)
        goal, _, _ = m.nearest_lane_segment(*scenario.goal.position)
    except NoLaneError:
        return False
    return int(m.poly_id[start]) != int(m.poly_id[goal])


def raw_components(scenario: Scenario) -> dict:
    states, valid = _positions(scenario)
    e = scenario.ego_index
    nearest = _nearest_distance(states, valid, e)
    accel, steer = ego_controls(scenario)
    x0, y0 = states[0, e, 0], states[0, e, 1]
    d0 = np.hypot(states[0, :, 0] - x0, states[0, :, 1] - y0)
    nearby = valid[0] & (d0 <= NEARBY_RADIUS)
    nearby[e] = False
    gx, gy = scenario.goal.position
    return {
        "cross": float(trajectory_crossings(scenario)),
        "accel": proximity_weighted_changes(accel, nearest),
        "steer": proximity_weighted_changes(steer, nearest),
        "ttc": float(ttc_critical_steps(scenario, states, valid)),
        "agents": float(nearby.sum()),
        "goal": float(math.hypot(gx - x0, gy - y0)),
    }


def check_exclusion(scenario: Scenario, cfg: CurationConfig) -> None:
    if len(scenario.agents) < cfg.min_agents:
        raise Excluded(f"fewer than {cfg.min_agents} agents")
    s = scenario.ego.logged_states[0]
    gx, gy = scenario.goal.position
    if math.hypot(gx - s.x, gy - s.y) < cfg.min_goal_distance:
        raise Excluded(f"goal closer than {cfg.min_goal_distance:g} m")


def interactivity_score(scenario: Scenario, cfg: CurationConfig | None = None) -> InteractivityReport:
    """Interactivity report of one scenario; raises :class:`Excluded`."""
    cfg = cfg or CurationConfig()
    check_exclusion(scenario, cfg)
    raw = raw_components(scenario)
    lam = cfg.lane_change_multiplier if lane_change_required(scenario) else cfg.default_multiplier
    normalized, score = combine_components(raw, lam, cfg)
    return InteractivityReport(scenario.id, raw, normalized, lam, score)


def score_pool(scenarios, cfg: CurationConfig | None = None) -> tuple[list[InteractivityReport], dict]:
    """Reports of the non-excluded scenarios and the exclusion reason of the rest."""
    reports, excluded = [], {}
    for sc in scenarios:
        try:
            reports.append(interactivity_score(sc, cfg))
        except Excluded as exc:
            excluded[sc.id] = exc.reason
    return reports, excluded


def rank_reports(reports, k: int) -> list[str]:
    """Ids of the ``k`` highest scores; equal scores go by id."""
    if k > len(reports):
        raise NotEnoughScenarios(f"asked for {k} scenarios, only {len(reports)} eligible")
    if k < 0:
        raise ValueError("k must be non-negative")
    ordered = sorted(reports, key=lambda r: (-r.score, r.scenario_id))
    return [r.scenario_id for r in ordered[:k]]


def build_interactive_split(scenarios, cfg: CurationConfig | None = None, k: int = 1000) -> list[str]:
    reports, _ = score_pool(scenarios, cfg)
    return rank_reports(reports, k)


def build_random_split(scenarios, k: int, seed: int) -> list[str]:
    """Uniform sample without replacement; the order of ``scenarios`` does not matter."""
    ids = sorted(s if isinstance(s, str) else s.id for s in scenarios)
    if k > len(ids):
        raise NotEnoughScenarios(f"asked for {k} scenarios, pool has {len(ids)}")
    if k < 0:
        raise ValueError("k must be non-negative")
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(ids), size=k, replace=False)
    return [ids[int(i)] for i in pick]


class InteractivityScorer(TransformerMixin, BaseEstimator):
    """Scikit-learn style wrapper over :func:`interactivity_score`.

    ``fit`` collects the raw component distribution of a scenario pool and
    stores its percentiles; with ``fit_thresholds=True`` the thresholds at
    ``percentile`` replace the configured ones. ``transform`` returns the
    normalized components, one row per scenario (NaN for excluded ones).
    """

    def __init__(self, config: CurationConfig | None = None, fit_thresholds: bool = False, percentile: float = 90.0):
        self.config = config
        self.fit_thresholds = fit_thresholds
        self.percentile = percentile

    def _cfg(self) -> CurationConfig:
        return self.config or CurationConfig()

    def fit(self, X, y=None):
        cfg = self._cfg()
        rows = []
        for sc in X:
            try:
                check_exclusion(sc, cfg)
            except Excluded:
                continue
            raw = raw_components(sc)
            rows.append([raw[c] for c in COMPONENTS])
        if not rows:
            raise NotEnoughScenarios("no eligible scenario to fit on")
        values = np.array(rows)
        self.n_fitted_ = len(rows)
        self.percentiles_ = {
            c: {q: float(np.percentile(values[:, j], q)) for q in REPORT_PERCENTILES} for j, c in enumerate(COMPONENTS)
        }
        thresholds = dict(cfg.thresholds)
        if self.fit_thresholds:
            for j, c in enumerate(COMPONENTS):
                value = float(np.percentile(values[:, j], self.percentile))
                if value > 0:
                    thresholds[c] = value
        self.thresholds_ = thresholds
        return self

    def _fitted_cfg(self) -> CurationConfig:
        cfg = self._cfg()
        thresholds = getattr(self, "thresholds_", cfg.thresholds)
        return CurationConfig(
            weights=cfg.weights,
            thresholds=thresholds,
            lane_change_multiplier=cfg.lane_change_multiplier,
            default_multiplier=cfg.default_multiplier,
            min_goal_distance=cfg.min_goal_distance,
            min_agents=cfg.min_agents,
        )

    def reports(self, X) -> list[InteractivityReport | None]:
        cfg = self._fitted_cfg()
        out = []
        for sc in X:
            try:
                out.append(interactivity_score(sc, cfg))
            except Excluded:
                out.append(None)
        return out

    def transform(self, X) -> np.ndarray:
        rows = []
        for r in self.reports(X):
            rows.append([np.nan] * len(COMPONENTS) if r is None else [r.normalized[c] for c in COMPONENTS])
        return np.array(rows, dtype=float).reshape(-1, len(COMPONENTS))

    def score_samples(self, X) -> np.ndarray:
        """Interactivity score per scenario, NaN for excluded ones."""
        return np.array([np.nan if r is None else r.score for r in self.reports(X)], dtype=float)
