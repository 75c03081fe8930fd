"""Name lookup for planners and traffic agents (the values accepted by the CLI)."""
from __future__ import annotations

from .planners import HybridConfig, HybridPlanner, IdmPlanner, PdmPlanner, PolicyPlanner
from .reward import PROFILE_NAMES
from .traffic import (
    ConstantVelocityTraffic,
    ExpertTraffic,
    HeuristicPolicy,
    HeuristicTraffic,
    IdmTraffic,
    NoTraffic,
)


class UnknownName(KeyError):
    pass


POLICIES = {"heuristic": HeuristicPolicy}
TRAFFIC_PROFILES = ("aggressive", "normal", "cautious", "mix")


def make_policy(name: str):
    if name not in POLICIES:
        raise UnknownName(f"unknown policy {name!r}; known: {', '.join(POLICIES)}")
    return POLICIES[name]()


def make_planner(name: str, cfg: HybridConfig | None = None):
    if name == "idm":
        return IdmPlanner()
    if name == "pdm":
        return PdmPlanner(cfg)
    kind, _, rest = name.partition(":")
    if kind == "hybrid" and rest:
        return HybridPlanner(make_policy(rest), cfg)
    if kind == "policy" and rest:
        return PolicyPlanner(make_policy(rest))
    raise UnknownName(f"unknown planner {name!r}; expected idm, pdm, hybrid:<policy> or policy:<policy>")


def make_traffic(name: str):
    if name == "idm":
        return IdmTraffic()
    if name == "expert":
        return ExpertTraffic()
    if name == "cv":
        return ConstantVelocityTraffic()
    if name == "none":
        return NoTraffic()
    if name == "heuristic":
        return HeuristicTraffic()
    kind, _, rest = name.partition(":")
    if kind == "heuristic" and rest in TRAFFIC_PROFILES:
        return HeuristicTraffic(rest)
    raise UnknownName(
        f"unknown traffic agent {name!r}; expected idm, expert, cv, none, heuristic or "
        f"heuristic:<{'|'.join(TRAFFIC_PROFILES)}>"
    )


def check_names(planners, traffic) -> None:
    """Raise UnknownName for the first unresolvable name."""
    for p in planners:
        make_planner(p)
    for t in traffic:
        make_traffic(t)


__all__ = ["PROFILE_NAMES", "UnknownName", "check_names", "make_planner", "make_policy", "make_traffic"]
