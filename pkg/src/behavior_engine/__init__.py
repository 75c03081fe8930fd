"""Closed-loop driving simulation, planners and benchmark scoring."""
from .dynamics import Action, ActionGrid, AgentKind, AgentState, Terminal, action_from_index, step_bicycle
from .engine import EngineConfig, EpisodeLog, World, build_observation, check_terminals, run_episode
from .geometry import MapIndex, NoLaneError, Obb, obb_overlap
from .metrics import ScoreBreakdown, classify_collision, score_episode
from .scenario import GoalSpec, Scenario, load_scenario, read_scenario
from .synthetic import generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ActionGrid",
    "AgentKind",
    "AgentState",
    "EngineConfig",
    "EpisodeLog",
    "GoalSpec",
    "MapIndex",
    "NoLaneError",
    "Obb",
    "Scenario",
    "ScoreBreakdown",
    "Terminal",
    "World",
    "action_from_index",
    "build_observation",
    "check_terminals",
    "classify_collision",
    "generate_synthetic",
    "load_scenario",
    "obb_overlap",
    "read_scenario",
    "run_episode",
    "score_episode",
    "step_bicycle",
]
