"""Scenario data model and its versioned JSON document format.

A document looks like::

    {"schema_version": 1, "id": "...", "dt": 0.1, "horizon_steps": 91,
     "map": [{"kind": "lane_center", "id": 0, "points": [[x, y], ...]}],
     "agents": [{"kind": "vehicle", "length": 4.5, "width": 2.0,
                 "controllable": true, "states": [[x, y, heading, speed], ...]}],
     "ego_index": 0,
     "goal": {"position": [x, y], "radius": 2.0, "max_speed": 2.0}}

Scenarios are immutable once loaded and may be shared across workers.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any

from .dynamics import AgentKind

SCHEMA_VERSION = 1
MAX_AGENTS = 128
DEFAULT_HORIZON = 91
DEFAULT_DT = 0.1


class SchemaError(ValueError):
    """A document field is missing or has the wrong type."""


class ValidationError(ValueError):
    """A well-formed document violates a scenario invariant."""


class PolylineKind(str, enum.Enum):
    LANE_CENTER = "lane_center"
    ROAD_EDGE = "road_edge"


@dataclass(frozen=True)
class MapPolyline:
    kind: PolylineKind
    points: tuple[tuple[float, float], ...]
    polyline_id: int


@dataclass(frozen=True)
class LoggedState:
    x: float
    y: float
    heading: float
    speed: float


@dataclass(frozen=True)
class AgentTrack:
    kind: AgentKind
    length: float
    width: float
    logged_states: tuple[LoggedState, ...]
    controllable: bool = True

    @property
    def goal_position(self) -> tuple[float, float]:
        last = self.logged_states[-1]
        return (last.x, last.y)


@dataclass(frozen=True)
class GoalSpec:
    position: tuple[float, float]
    radius: float = 2.0
    max_speed: float = 2.0


@dataclass(frozen=True)
class Scenario:
    id: str
    map: tuple[MapPolyline, ...]
    agents: tuple[AgentTrack, ...]
    ego_index: int
    goal: GoalSpec
    horizon_steps: int = DEFAULT_HORIZON
    dt: float = DEFAULT_DT
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    @property
    def ego(self) -> AgentTrack:
        return self.agents[self.ego_index]

    def map_index(self):
        """Spatial index over this scenario's map, built once and memoized."""
        if "map_index" not in self._cache:
            from .geometry import MapIndex

            self._cache["map_index"] = MapIndex.from_scenario(self)
        return self._cache["map_index"]


def validate(scenario: Scenario) -> Scenario:
    if len(scenario.agents) > MAX_AGENTS:
        raise ValidationError(f"agent count {len(scenario.agents)} exceeds {MAX_AGENTS}")
    if not scenario.agents:
        raise ValidationError("agent count must be at least 1")
    if not scenario.dt > 0:
        raise ValidationError("dt must be positive")
    if scenario.horizon_steps < 1:
        raise ValidationError("horizon_steps must be at least 1")
    if not 0 <= scenario.ego_index < len(scenario.agents):
        raise ValidationError("ego_index out of range")
    ego = scenario.agents[scenario.ego_index]
    if ego.kind.is_vru or not ego.controllable:
        raise ValidationError("ego must be controllable")
    for i, track in enumerate(scenario.agents):
        if track.kind.is_vru and track.controllable:
            raise ValidationError(f"agent {i}: pedestrians and cyclists must not be controllable")
        if not 1 <= len(track.logged_states) <= scenario.horizon_steps:
            raise ValidationError(f"agent {i}: logged state count must be in 1..horizon_steps")
        if not (track.length > 0 and track.width > 0):
            raise ValidationError(f"agent {i}: footprint must be positive")
        for st in track.logged_states:
            if not -math.pi < st.heading <= math.pi:
                raise ValidationError(f"agent {i}: heading outside (-pi, pi]")
    seen = set()
    for poly in scenario.map:
        if poly.polyline_id in seen:
            raise ValidationError(f"duplicate polyline id {poly.polyline_id}")
        seen.add(poly.polyline_id)
        if len(poly.points) < 2:
            raise ValidationError(f"polyline {poly.polyline_id}: needs at least 2 points")
        for a, b in zip(poly.points, poly.points[1:]):
            if a == b:
                raise ValidationError(f"polyline {poly.polyline_id}: consecutive points coincide")
    if not scenario.goal.radius > 0:
        raise ValidationError("goal radius must be positive")
    if not scenario.goal.max_speed >= 0:
        raise ValidationError("goal max_speed must be non-negative")
    return scenario


def _req(obj: dict, key: str, types, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{where}: missing field '{key}'")
    val = obj[key]
    if isinstance(val, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise SchemaError(f"{where}.{key}: expected {types}, got bool")
    if not isinstance(val, types):
        raise SchemaError(f"{where}.{key}: expected {types}, got {type(val).__name__}")
    return val


def _num(obj, key, where, default=None) -> float:
    if default is not None and key not in obj:
        return float(default)
    return float(_req(obj, key, (int, float), where))


def _point(val, n: int, where: str) -> tuple[float, ...]:
    if not isinstance(val, list) or len(val) != n:
        raise SchemaError(f"{where}: expected a list of {n} numbers")
    for v in val:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(f"{where}: expected numbers")
    return tuple(float(v) for v in val)


def _enum(cls, val, where):
    try:
        return cls(val)
    except ValueError:
        raise SchemaError(f"{where}: unknown kind {val!r}") from None


def scenario_from_dict(doc: dict[str, Any]) -> Scenario:
    if not isinstance(doc, dict):
        raise SchemaError("document must be a JSON object")
    version = _req(doc, "schema_version", int, "document")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version}")
    polylines = []
    for i, p in enumerate(_req(doc, "map", list, "document")):
        where = f"map[{i}]"
        pts = tuple(_point(q, 2, f"{where}.points") for q in _req(p, "points", list, where))
        polylines.append(
            MapPolyline(_enum(PolylineKind, _req(p, "kind", str, where), where), pts, _req(p, "id", int, where))
        )
    agents = []
    for i, a in enumerate(_req(doc, "agents", list, "document")):
        where = f"agents[{i}]"
        states = tuple(LoggedState(*_point(s, 4, f"{where}.states")) for s in _req(a, "states", list, where))
        agents.append(
            AgentTrack(
                kind=_enum(AgentKind, _req(a, "kind", str, where), where),
                length=_num(a, "length", where),
                width=_num(a, "width", where),
                logged_states=states,
                controllable=_req(a, "controllable", bool, where),
            )
        )
    g = _req(doc, "goal", dict, "document")
    goal = GoalSpec(
        position=_point(_req(g, "position", list, "goal"), 2, "goal.position"),
        radius=_num(g, "radius", "goal", default=2.0),
        max_speed=_num(g, "max_speed", "goal", default=2.0),
    )
    horizon = doc.get("horizon_steps", DEFAULT_HORIZON)
    if isinstance(horizon, bool) or not isinstance(horizon, int):
        raise SchemaError("document.horizon_steps: expected int")
    return validate(
        Scenario(
            id=_req(doc, "id", str, "document"),
            map=tuple(polylines),
            agents=tuple(agents),
            ego_index=_req(doc, "ego_index", int, "document"),
            goal=goal,
            horizon_steps=horizon,
            dt=_num(doc, "dt", "document", default=DEFAULT_DT),
        )
    )


def scenario_to_dict(scenario: Scenario) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "id": scenario.id,
        "dt": scenario.dt,
        "horizon_steps": scenario.horizon_steps,
        "map": [
            {"kind": p.kind.value, "id": p.polyline_id, "points": [list(q) for q in p.points]}
            for p in scenario.map
        ],
        "agents": [
            {
                "kind": a.kind.value,
                "length": a.length,
                "width": a.width,
                "controllable": a.controllable,
                "states": [[s.x, s.y, s.heading, s.speed] for s in a.logged_states],
            }
            for a in scenario.agents
        ],
        "ego_index": scenario.ego_index,
        "goal": {
            "position": list(scenario.goal.position),
            "radius": scenario.goal.radius,
            "max_speed": scenario.goal.max_speed,
        },
    }


def load_scenario(data: bytes | str) -> Scenario:
    """Parse and validate a scenario JSON document."""
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from None
    return scenario_from_dict(doc)


def dump_scenario(scenario: Scenario) -> bytes:
    return json.dumps(scenario_to_dict(scenario), separators=(",", ":")).encode()


def read_scenario(path) -> Scenario:
    with open(path, "rb") as fh:
        return load_scenario(fh.read())
