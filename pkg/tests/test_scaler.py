import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import p0_oracle
from sqlr import rl_core
from sqlr.qcurve import ScalerLevels, scaler_levels
from sqlr.scaler import (
    CASE_1,
    DampingState,
    ScalerAgent,
    ScalerRewardParams,
    ScalerState,
    apply_damping,
    init_diagonals,
    load_table,
    p0_estimate,
    permissible_deltas,
    save_table,
    scaler_observe,
    select_scale_action,
    sqlr_reward,
)

LEVELS = scaler_levels(45)


def test_reward_examples():
    assert sqlr_reward(0, 1, CASE_1) == 0.01
    assert sqlr_reward(0.101, 3, CASE_1) == pytest.approx(-0.12)
    p = ScalerRewardParams(theta=10, beta=0.001)
    assert sqlr_reward(0.001, 5, p) == pytest.approx(0.01 - 0.004)


@given(st.floats(0, 1), st.floats(0, 1), st.integers(1, 9))
def test_reward_monotone(P1, P2, K):
    lo, hi = sorted((P1, P2))
    assert sqlr_reward(hi, K, CASE_1) <= sqlr_reward(lo, K, CASE_1)
    assert sqlr_reward(lo, K + 1, CASE_1) <= sqlr_reward(lo, K, CASE_1)


def test_params_validation():
    with pytest.raises(ValueError):
        ScalerRewardParams(theta=-1)
    with pytest.raises(ValueError):
        ScalerRewardParams(r_min=0)
    with pytest.raises(ValueError):
        ScalerRewardParams(p_blk=1.5)


def test_p0_examples():
    assert p0_estimate(10, 45, 62) == 0
    assert p0_estimate(80, 45, 62) == 1
    assert p0_estimate(45, 45, 62) == 0.5
    got = p0_estimate(53.5, 45, 62)
    assert got == pytest.approx(p0_oracle(0.5), abs=1e-12)
    assert got == pytest.approx(0.9129, abs=5e-4)


@given(st.floats(0, 100), st.floats(0, 100))
def test_p0_monotone_except_jump(a, b):
    lo, hi = sorted((a, b))
    assert p0_estimate(lo, 45, 62) <= p0_estimate(hi, 45, 62)


def test_init_diagonals_examples():
    t = init_diagonals(rl_core.QTable(), LEVELS, CASE_1, 62, 10)
    assert t.value((1, 0, 0), 0) == pytest.approx(0.01)
    assert t.value((4, 15, 15), 0) == pytest.approx(1 * (0.001 - 1) + 0.01 * (1 - 4))
    assert t.value((4, 15, 14), 0) == 0
    assert t.value((4, 15, 15), 1) == 0
    # a level whose midpoint sits at eta = 0.5 needs custom boundaries
    custom = ScalerLevels(x_lim=45, boundaries=(0.0, 45.0, 62.0))
    t2 = init_diagonals(rl_core.QTable(), custom, CASE_1, 62, 2)
    assert t2.value((2, 1, 1), 0) == pytest.approx(0.001 - 0.9129 - 0.01, abs=5e-4)


def test_permissible_deltas():
    assert permissible_deltas(1, 2, 10) == [0, 1, 2]
    assert permissible_deltas(10, 2, 10) == [-2, -1, 0]
    for K in range(1, 11):
        assert all(1 <= K + d <= 10 for d in permissible_deltas(K, 2, 10))


def test_untrained_selection_is_uniform():
    rng = np.random.default_rng(7)
    exp = rl_core.ExplorationParams(M=20)
    n = 25_000
    counts = {d: 0 for d in range(-2, 3)}
    for _ in range(n):
        counts[select_scale_action(ScalerState(5, 3, 4), rl_core.QTable(), exp, rng)] += 1
    sigma = math.sqrt(0.2 * 0.8 / n)
    assert all(abs(c / n - 0.2) < 3.5 * sigma for c in counts.values())


def test_damping_examples():
    d = DampingState()
    assert apply_damping(-1, True, d) == 0
    assert apply_damping(-1, True, d) == -1
    d = DampingState()
    assert apply_damping(-1, True, d) == 0
    assert apply_damping(1, True, d) == 1
    assert not d.pending_scale_in
    assert apply_damping(-2, False, DampingState()) == -2


def test_observe_gamma_zero_uses_raw_reward():
    t = rl_core.QTable()
    prev = ScalerState(3, 4, 5)
    q = scaler_observe(prev, 1, 0.101, 3, 5, t, CASE_1, gamma=0.0)
    assert q == pytest.approx(-0.12)
    assert t.visits(prev.key, 1) == 1


def test_observe_scale_out_to_initialized_diagonal():
    t = init_diagonals(rl_core.QTable(), LEVELS, CASE_1, 62, 10)
    prev = ScalerState(3, 15, 15)
    ref = t.value((4, 15, 15), 0)
    q = scaler_observe(prev, 1, 0.0, 4, 15, t, CASE_1, gamma=0.9)
    assert q == pytest.approx(sqlr_reward(0.0, 4, CASE_1) + 0.9 * ref)


def test_observe_card_zero_is_self_referential():
    t = init_diagonals(rl_core.QTable(), LEVELS, CASE_1, 62, 10)
    s = ScalerState(2, 3, 3)
    q0 = t.value(s.key, 0)
    r = sqlr_reward(0.0, 2, CASE_1)
    q1 = scaler_observe(s, 0, 0.0, 2, 3, t, CASE_1, gamma=0.9)
    # n = 1: Q <- R' - Q + 0, with R' built from the old value of the same cell
    assert q1 == pytest.approx(r + 0.9 * q0 - q0)
    q2 = scaler_observe(s, 0, 0.0, 2, 3, t, CASE_1, gamma=0.9)
    assert abs(q2 - q1) <= abs(r + 0.9 * q1 - q1) / 2 + abs(q1) / 2 + 1e-12


def test_table_roundtrip(tmp_path):
    t = init_diagonals(rl_core.QTable(), LEVELS, CASE_1, 62, 3)
    scaler_observe(ScalerState(2, 1, 2), -1, 0.0, 1, 2, t, CASE_1, 0.9)
    save_table(t, tmp_path / "s.json")
    back = load_table(tmp_path / "s.json")
    assert back.q == t.q
    assert dict(back.state_visits) == dict(t.state_visits)


def test_agent_epoch_cycle():
    agent = ScalerAgent(LEVELS, CASE_1, np.random.default_rng(0))
    state, chosen, applied = agent.on_epoch(30.0, 0.0, 1)
    assert state == ScalerState(1, 12, 12)
    assert chosen in (0, 1, 2) and applied == chosen
    state2, _, _ = agent.on_epoch(10.0, 0.0, 1 + applied)
    assert state2.prev_level == 12 and state2.cur_level == 5
    assert agent.table.visits(state.key, applied) == 1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_damping_property_random_sequences(seed):
    rng = np.random.default_rng(seed)
    d = DampingState()
    removed = decisions = flags = 0
    for _ in range(5_000):
        delta = int(rng.integers(-2, 3))
        was_pending = d.pending_scale_in
        out = apply_damping(delta, True, d)
        if delta >= 0:
            assert out == delta and not d.pending_scale_in
            continue
        decisions += 1
        if was_pending:
            assert out == delta  # second of two consecutive scale-ins
        else:
            flags += 1
            assert out == 0  # an isolated scale-in never removes a VM
        removed += out < 0
    assert removed <= decisions - flags
