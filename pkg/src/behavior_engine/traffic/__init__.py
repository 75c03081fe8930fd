from .agents import (
    ConstantVelocityTraffic,
    ExpertTraffic,
    HeuristicTraffic,
    IdmTraffic,
    NoTraffic,
    constant_velocity_forecast,
    expert_replay_step,
)
from .idm import IdmParams, idm_acceleration, idm_agent_step, select_lane
from .policy import HeuristicPolicy, HeuristicWeights, Policy, RankedActions

__all__ = [
    "ConstantVelocityTraffic",
    "ExpertTraffic",
    "HeuristicPolicy",
    "HeuristicTraffic",
    "HeuristicWeights",
    "IdmParams",
    "IdmTraffic",
    "NoTraffic",
    "Policy",
    "RankedActions",
    "constant_velocity_forecast",
    "expert_replay_step",
    "idm_acceleration",
    "idm_agent_step",
    "select_lane",
]
