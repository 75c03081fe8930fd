import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from behavior_engine.dynamics import AgentKind, AgentState, Terminal
from behavior_engine.metrics import (
    CollisionCategory,
    EmptyEpisode,
    LengthMismatch,
    ade_minade,
    alignment_from_errors,
    centering_from_offsets,
    classify_collision,
    combine,
    comfort_from_arrays,
    score_episode,
)
from builders import make_log, make_scenario, random_log, straight_map, track
from oracles import score

LANES = (0.0, 3.5)


def two_lane_index():
    return make_scenario([track([(0, 0, 0, 0)])], straight_map(LANES)).map_index()


def one_lane_index():
    return make_scenario([track([(0, 0, 0, 0)])], straight_map((0.0,))).map_index()


def test_comfort_examples():
    assert comfort_from_arrays(np.zeros((10, 2)), np.zeros((10, 2))) == 1.0
    assert comfort_from_arrays(np.full((10, 2), 4.0), np.full((10, 2), 6.0)) == 0.0
    accel = np.zeros((10, 2))
    accel[:3] = [3.5, -3.5]  # six acceleration violations
    assert comfort_from_arrays(accel, np.zeros((10, 2))) == pytest.approx(0.8)


def test_comfort_limits_are_strict():
    assert comfort_from_arrays(np.full((4, 2), 3.0), np.full((4, 2), 5.0)) == 1.0


def test_empty_subscores_raise():
    with pytest.raises(EmptyEpisode):
        comfort_from_arrays(np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(EmptyEpisode):
        alignment_from_errors([])
    with pytest.raises(EmptyEpisode):
        centering_from_offsets([])


def test_alignment_examples():
    assert alignment_from_errors([0.0] * 5) == 1.0
    assert alignment_from_errors([math.pi / 6] * 5) == 0.0
    assert alignment_from_errors([0.0, math.pi / 6, 0.1, -math.pi / 4]) == 0.5
    assert alignment_from_errors([2 * math.pi]) == 1.0


def test_centering_examples():
    assert centering_from_offsets([0.0, 0.0]) == 1.0
    assert centering_from_offsets([2.0, -2.0]) == 0.0
    assert centering_from_offsets([1.0, -1.0]) == 0.5
    assert centering_from_offsets([5.0]) == 0.0


def vehicle(x, y, h, v, kind=AgentKind.VEHICLE):
    return AgentState(x, y, h, v, 4.5, 2.0, kind=kind)


# ego on its lane with a straight track, or straddling both lanes after drifting left
STEADY = (0.0, [(x, 0.0, 0.0) for x in np.linspace(40, 50, 11)])
CHANGING = (1.75, [(x, 0.5 + 0.125 * k, 0.0) for k, x in enumerate(np.linspace(40, 50, 11))])

TRUTH_TABLE = [
    # (ego speed, other dx, other dy, other speed, other kind, lane change, category, at fault)
    (0.0, -5.0, 0.0, 5.0, AgentKind.VEHICLE, False, CollisionCategory.STOPPED_EGO, False),
    (8.0, 4.8, 0.0, 0.0, AgentKind.VEHICLE, False, CollisionCategory.STOPPED_TRACK, True),
    (10.0, 4.8, 0.0, 5.0, AgentKind.VEHICLE, False, CollisionCategory.ACTIVE_FRONT, True),
    (10.0, -4.8, 0.0, 15.0, AgentKind.VEHICLE, False, CollisionCategory.ACTIVE_REAR, False),
    (10.0, -4.8, 0.0, 15.0, AgentKind.VEHICLE, True, CollisionCategory.ACTIVE_REAR, True),
    (10.0, 0.0, 2.0, 10.0, AgentKind.VEHICLE, False, CollisionCategory.ACTIVE_LATERAL, False),
    (10.0, 0.0, 2.0, 10.0, AgentKind.VEHICLE, True, CollisionCategory.ACTIVE_LATERAL, True),
    # ahead but not being closed on falls through to lateral
    (10.0, 4.8, 0.0, 10.0, AgentKind.VEHICLE, False, CollisionCategory.ACTIVE_LATERAL, False),
    (0.0, 3.0, 0.0, 1.0, AgentKind.PEDESTRIAN, False, CollisionCategory.VRU_CONTACT, True),
    (10.0, 0.0, 1.8, 5.0, AgentKind.CYCLIST, False, CollisionCategory.VRU_CONTACT, True),
]


@pytest.mark.parametrize("ego_v,dx,dy,other_v,kind,lc,category,fault", TRUTH_TABLE)
def test_collision_truth_table(ego_v, dx, dy, other_v, kind, lc, category, fault):
    y, rows = CHANGING if lc else STEADY
    ego = vehicle(50.0, y, 0.0, ego_v)
    other = vehicle(50.0 + dx, y + dy, 0.0, other_v, kind)
    verdict = classify_collision(ego, other, two_lane_index(), rows)
    assert verdict.lane_change_detected == lc
    assert verdict.category is category
    assert verdict.at_fault is fault


def test_closing_uses_previous_frame_when_given():
    ego, other = vehicle(50, 0, 0, 10.0), vehicle(54.8, 0, 0, 10.0)
    # the gap shrank by 0.2 m over 0.1 s although both report equal speed
    ego_prev, other_prev = vehicle(49.8, 0, 0, 10.0), vehicle(54.8, 0, 0, 10.0)
    v = classify_collision(ego, other, two_lane_index(), STEADY[1], ego_prev, other_prev, 0.1)
    assert v.category is CollisionCategory.ACTIVE_FRONT


def cruise(n, y=0.0, v=10.0):
    return np.array([(10.0 + v * 0.1 * k, y, 0.0, v) for k in range(n + 1)])


def test_perfect_episode_scores_one():
    log = make_log(cruise(30), np.zeros((30, 2)), terminal=Terminal.GOAL_REACHED)
    s = score_episode(log, one_lane_index())
    assert (s.s_cmf, s.s_align, s.s_ctr, s.combined) == (1.0, 1.0, 1.0, 1.0)


def test_at_fault_collision_zeroes_score():
    ego = cruise(20)
    stopped = np.tile([ego[-1, 0] + 4.6, 0.0, 0.0, 0.0], (21, 1))
    log = make_log(ego, np.zeros((20, 2)), others=[stopped], terminal=Terminal.GOAL_REACHED, collisions=[(20, 0, 1)])
    s = score_episode(log, one_lane_index())
    assert s.af_collision == 1 and s.combined == 0.0
    assert s.verdicts[0].category is CollisionCategory.STOPPED_TRACK


def test_not_at_fault_collision_keeps_score():
    ego = cruise(20)
    ego[-1, 3] = 0.0
    rear = np.tile([ego[-1, 0] - 4.6, 0.0, 0.0, 5.0], (21, 1))
    log = make_log(ego, np.zeros((20, 2)), others=[rear], terminal=Terminal.GOAL_REACHED, collisions=[(20, 1, 0)])
    s = score_episode(log, one_lane_index())
    assert s.af_collision == 0 and s.combined == 1.0


def test_offset_episode_scores_point_seven():
    log = make_log(cruise(30, y=2.0), np.zeros((30, 2)), terminal=Terminal.GOAL_REACHED)
    s = score_episode(log, one_lane_index())
    assert s.s_ctr == 0.0
    assert s.combined == pytest.approx(0.7, abs=1e-12)


def test_gates():
    idx = one_lane_index()
    assert score_episode(make_log(cruise(5), np.zeros((5, 2)), terminal=Terminal.OFF_ROAD), idx).combined == 0.0
    assert score_episode(make_log(cruise(5), np.zeros((5, 2)), terminal=None), idx).combined == 0.0


def test_zero_step_episode_has_zero_subscores():
    log = make_log(cruise(0), np.zeros((0, 2)), terminal=Terminal.COLLIDED)
    s = score_episode(log, one_lane_index())
    assert (s.s_cmf, s.s_align, s.s_ctr, s.combined) == (0.0, 0.0, 0.0, 0.0)


def test_missing_lanes_warn_and_score_zero():
    idx = make_scenario([track([(0, 0, 0, 0)])], straight_map(lane_ys=(), edge_ys=(-5.0,))).map_index()
    with pytest.warns(RuntimeWarning):
        s = score_episode(make_log(cruise(5), np.zeros((5, 2)), terminal=Terminal.GOAL_REACHED), idx)
    assert s.s_align == 0.0 and s.s_ctr == 0.0


def test_ade_minade():
    gt = np.column_stack([np.arange(5.0), np.zeros(5)])
    exact, shifted = gt.copy(), gt + [0.0, 2.0]
    min_ade, ade = ade_minade(np.stack([exact, shifted]), gt)
    assert min_ade == 0.0 and ade == 1.0
    with pytest.raises(LengthMismatch):
        ade_minade(np.zeros((2, 4, 2)), gt)


def test_ade_minade_multi_agent():
    gt = np.zeros((2, 3, 2))
    r = np.zeros((2, 2, 3, 2))
    r[0, 0] += [3.0, 4.0]  # agent 0 off by 5 in rollout 0
    r[1, 1] += [0.0, 1.0]  # agent 1 off by 1 in rollout 1
    min_ade, ade = ade_minade(r, gt)
    assert min_ade == 0.0
    assert ade == pytest.approx((2.5 + 0.5) / 2)


unit = st.floats(0, 1)
flag = st.integers(0, 1)


@settings(max_examples=300, deadline=None)
@given(af=flag, off=flag, goal=flag, c=unit, a=unit, d=unit)
def test_combined_in_unit_interval(af, off, goal, c, a, d):
    assert 0.0 <= combine(af, off, goal, c, a, d) <= 1.0


@settings(max_examples=300, deadline=None)
@given(c=unit, a=unit, d=unit, dc=unit, da=unit, dd=unit)
def test_combined_monotone_in_subscores(c, a, d, dc, da, dd):
    lo = combine(0, 0, 1, c, a, d)
    hi = combine(0, 0, 1, min(c + dc, 1), min(a + da, 1), min(d + dd, 1))
    assert hi >= lo - 1e-15


def test_score_matches_oracle_on_random_logs():
    rng = np.random.default_rng(11)
    idx = two_lane_index()
    seen_fault = seen_clear = 0
    for _ in range(100):
        log = random_log(rng)
        got = score_episode(log, idx)
        want = score(log, LANES, (-50.0, 250.0))
        for key, value in want.items():
            assert getattr(got, key) == pytest.approx(value, abs=1e-9), key
        seen_fault += got.af_collision == 1
        seen_clear += got.combined > 0
    assert seen_fault > 0 and seen_clear > 0
