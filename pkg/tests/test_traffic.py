import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from behavior_engine.dynamics import AgentKind, action_from_index
from behavior_engine.engine import World, build_observation, expert_replay_step
from behavior_engine.traffic import (
    HeuristicPolicy,
    HeuristicTraffic,
    constant_velocity_forecast,
)
from behavior_engine.traffic.idm import IdmParams, idm_acceleration, idm_acceleration_arrays, idm_agent_step
from behavior_engine.traffic.policy import RankedActions
from builders import make_scenario, straight_map, straight_states, track
from oracles import idm


def test_idm_at_desired_speed():
    assert idm_acceleration(15.0, None, None) == 0.0


def test_idm_from_standstill():
    assert idm_acceleration(0.0, None, None) == 1.0


def test_idm_stationary_leader():
    expected = 1.0 * (1 - (10 / 15) ** 4 - ((1 + 15 + 10 * 10 / (2 * math.sqrt(2))) / 20) ** 2)
    assert idm_acceleration(10.0, 20.0, 0.0) == pytest.approx(expected, abs=1e-9)
    assert idm(10.0, 20.0, 10.0) == pytest.approx(expected, abs=1e-12)


def test_idm_params_validated():
    with pytest.raises(ValueError):
        IdmParams(v0=0.0)


@settings(max_examples=300, deadline=None)
@given(v=st.floats(0, 40), gap=st.floats(0.05, 200), vl=st.floats(0, 40))
def test_idm_matches_oracle(v, gap, vl):
    assert idm_acceleration(v, gap, vl) == pytest.approx(idm(v, gap, v - vl), rel=1e-9, abs=1e-9)
    assert float(idm_acceleration_arrays(v, gap, vl)) == pytest.approx(idm_acceleration(v, gap, vl), abs=1e-12)


def test_idm_array_free_road():
    assert float(idm_acceleration_arrays(10.0, np.inf, 0.0)) == idm_acceleration(10.0, None, None)


def world(agents, lane_ys=(0.0,), goal=(190.0, 0.0)):
    return World(make_scenario(agents, straight_map(lane_ys), goal=goal))


def test_idm_step_free_lane():
    w = world([track([(0.0, 0.0, 0.0, 5.0)])])
    a = idm_agent_step(w, 0)
    assert a.acceleration > 0
    assert abs(a.steering) < 1e-9


def test_idm_step_close_leader_brakes_hard():
    w = world([track([(0.0, 0.0, 0.0, 10.0)]), track([(9.5, 0.0, 0.0, 0.0)])])
    gap = 9.5 - 4.5
    assert idm(10.0, gap, 10.0) < -IdmParams().b
    assert idm_agent_step(w, 0).acceleration < -IdmParams().b


def test_idm_step_steers_back_to_lane():
    left = world([track([(0.0, 1.0, 0.0, 5.0)])])
    right = world([track([(0.0, -1.0, 0.0, 5.0)])])
    assert idm_agent_step(left, 0).steering < 0
    assert idm_agent_step(right, 0).steering > 0


def test_idm_without_lanes_goes_straight():
    sc = make_scenario([track([(0.0, 0.0, 0.0, 5.0)])], map_polys=())
    a = idm_agent_step(World(sc), 0)
    assert a.steering == 0.0 and a.acceleration > 0


def test_replay_returns_logged_state():
    states = straight_states(0, 0, 7, 30)
    w = world([track(straight_states(0, 5, 0, 30)), track(states)], lane_ys=(0.0, 5.0))
    for t in range(29):
        w.t = t
        s = expert_replay_step(w, 1)
        assert (s.x, s.y, s.heading, s.speed) == states[t + 1]


def test_replay_independent_of_others():
    rng = np.random.default_rng(0)
    w = world([track(straight_states(0, 0, 5, 30)), track(straight_states(0, 5, 3, 30))], lane_ys=(0.0, 5.0))
    w.t = 10
    ref = expert_replay_step(w, 1)
    for _ in range(50):
        w.x[0], w.y[0], w.heading[0], w.speed[0] = rng.uniform(-50, 50, 4)
        assert expert_replay_step(w, 1) == ref


def test_forecast_stationary_and_moving():
    w = world([track([(0.0, 0.0, 0.0, 0.0)]), track([(0.0, 5.0, 0.0, 10.0)])], lane_ys=(0.0, 5.0))
    f = constant_velocity_forecast(w, 20)
    assert f.shape == (20, 2, 4)
    assert np.all(f[:, 0] == [0.0, 0.0, 0.0, 0.0])
    assert np.allclose(np.diff(f[:, 1, 0]), 1.0, atol=1e-12)
    assert f[0, 1, 0] == pytest.approx(1.0)


def test_forecast_horizon_validated():
    with pytest.raises(ValueError):
        constant_velocity_forecast(world([track([(0, 0, 0, 0)])]), 0)


@settings(max_examples=50, deadline=None)
@given(angle=st.floats(-math.pi, math.pi), tx=st.floats(-100, 100), ty=st.floats(-100, 100))
def test_forecast_rigid_equivariance(angle, tx, ty):
    rng = np.random.default_rng(1)
    base = rng.uniform([-20, -20, -3, 0], [20, 20, 3, 15], (4, 4))
    c, s = math.cos(angle), math.sin(angle)
    moved = base.copy()
    moved[:, 0] = c * base[:, 0] - s * base[:, 1] + tx
    moved[:, 1] = s * base[:, 0] + c * base[:, 1] + ty
    moved[:, 2] = np.arctan2(np.sin(base[:, 2] + angle), np.cos(base[:, 2] + angle))
    fa = constant_velocity_forecast(world([track([tuple(r)]) for r in base]), 10)
    fb = constant_velocity_forecast(world([track([tuple(r)]) for r in moved]), 10)
    assert np.allclose(fb[..., 0], c * fa[..., 0] - s * fa[..., 1] + tx, atol=1e-9)
    assert np.allclose(fb[..., 1], s * fa[..., 0] + c * fa[..., 1] + ty, atol=1e-9)


def test_policy_clear_road():
    w = world([track([(0.0, 0.0, 0.0, 5.0)])], goal=(150.0, 0.0))
    ranked = HeuristicPolicy().rank(build_observation(w, 0))
    top = action_from_index(w.grid, ranked.indices[0])
    comfortable = max(a for a in w.grid.accelerations if abs(a) <= 3.0)
    assert top.steering == 0.0
    assert top.acceleration == comfortable


def test_policy_steers_around_blocker():
    agents = [track([(0.0, 0.0, 0.0, 8.0)]), track([(14.5, 0.0, 0.0, 0.0)], controllable=False)]
    w = World(make_scenario(agents, straight_map((0.0, 3.5), edge_ys=(-1.75, 5.25)), goal=(80.0, 3.5)))
    policy = HeuristicPolicy()
    obs = build_observation(w, 0)
    scores = policy.potentials(obs)
    best = max(range(91), key=lambda i: (scores[i], -i))
    assert policy.rank(obs).indices[0] == best
    assert action_from_index(w.grid, best).steering > 0


def test_policy_returns_all_actions():
    w = world([track([(0.0, 0.0, 0.0, 5.0)]), track([(20.0, 0.0, 0.0, 3.0)])])
    ranked = HeuristicPolicy().rank(build_observation(w, 0))
    assert len(ranked) == 91
    assert sorted(ranked.indices) == list(range(91))
    assert list(ranked.scores) == sorted(ranked.scores, reverse=True)


def test_ranked_actions_validation():
    with pytest.raises(ValueError):
        RankedActions((1, 1), (0.0, 0.0))
    assert RankedActions.from_scores(np.array([1.0, 2.0, 2.0])).indices == (1, 2, 0)


def test_heuristic_traffic_mix_is_seeded():
    agents = [track([(0.0, 0.0, 0.0, 5.0)])] + [track([(20.0 * i, 3.5, 0.0, 5.0)]) for i in range(1, 6)]
    w = World(make_scenario(agents, straight_map((0.0, 3.5))))
    a, b = HeuristicTraffic("mix"), HeuristicTraffic("mix")
    a.reset(w, 3)
    b.reset(w, 3)
    assert a._assign == b._assign
    assert a.act(w, 2) == b.act(w, 2)


def test_pedestrians_are_replayed():
    ped = track(straight_states(10, 5, 1, 91), kind=AgentKind.PEDESTRIAN, length=0.5, width=0.5, controllable=False)
    w = world([track([(0.0, 0.0, 0.0, 5.0)]), ped])
    assert w.replay[1] and not w.replay[0]
