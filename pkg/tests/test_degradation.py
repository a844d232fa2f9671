"""Degradation schedule and scenario semantics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faultgait.degradation import (
    FaultScenario,
    ScheduleParams,
    all_joints_fault,
    apply_degradation,
    multi_fault,
    sample_initial,
    scenario_degradation,
    schedule_step,
    schedule_step_batch,
    single_fault,
)
from faultgait.joints import N_JOINTS


def test_apply_identity_and_cutoff():
    tau = np.linspace(-30, 30, N_JOINTS)
    assert np.array_equal(apply_degradation(tau, np.zeros(N_JOINTS)), tau)
    d = np.zeros(N_JOINTS)
    d[5] = 1.0
    out = apply_degradation(tau, d)
    assert out[5] == 0.0
    mask = np.arange(N_JOINTS) != 5
    assert np.array_equal(out[mask], tau[mask])


def test_apply_hand_value():
    tau = np.full(N_JOINTS, 10.0)
    d = np.full(N_JOINTS, 0.5)
    assert np.allclose(apply_degradation(tau, d), 5.0)


def test_apply_rejects_bad_rates():
    tau = np.zeros(N_JOINTS)
    with pytest.raises(ValueError):
        apply_degradation(tau, np.full(N_JOINTS, 1.5))
    with pytest.raises(ValueError):
        apply_degradation(tau, np.full(N_JOINTS, -0.1))
    with pytest.raises(ValueError):
        apply_degradation(tau, np.zeros(3))


@given(st.floats(0.0, 1.0), st.lists(st.floats(-50, 50), min_size=12, max_size=12))
def test_apply_is_linear(scale, tau):
    tau = np.asarray(tau)
    d = np.full(N_JOINTS, 0.3)
    assert np.allclose(apply_degradation(scale * tau, d), scale * apply_degradation(tau, d))


def test_schedule_hold_branch():
    params = ScheduleParams(p=0.0)
    rng = np.random.default_rng(0)
    for _ in range(100):
        assert schedule_step(0.3, rng, params) == 0.3


def test_schedule_reset_branch():
    params = ScheduleParams(p=0.0, delta=1e-4)
    rng = np.random.default_rng(0)
    for _ in range(200):
        out = schedule_step(0.99999, rng, params)
        assert 0.0 <= out < 0.5


def test_schedule_jump_is_monotone():
    params = ScheduleParams(p=1.0)
    rng = np.random.default_rng(1)
    d = 0.0
    for _ in range(1000):
        d_new = schedule_step(d, rng, params)
        assert d_new >= d
        assert d_new <= 1.0
        d = d_new


def test_schedule_event_frequency():
    # frequency of the stochastic jump branch over many steps ~ p
    params = ScheduleParams(p=0.02)
    rng = np.random.default_rng(7)
    d = np.full(200_000, 0.3)
    d_next = schedule_step_batch(d, rng, params)
    events = np.count_nonzero(d_next != 0.3)
    freq = events / d.size
    assert abs(freq - 0.02) < 0.001


def test_schedule_long_run_stays_in_range_and_mixes():
    params = ScheduleParams()
    rng = np.random.default_rng(3)
    d = np.full(64, 0.3)
    low_band = high_band = 0
    for _ in range(20_000):
        d = schedule_step_batch(d, rng, params)
        assert (d >= 0.0).all() and (d <= 1.0).all()
        low_band += int((d <= 0.5).any())
        high_band += int((d > 0.5).any())
    assert low_band > 0 and high_band > 0


def test_batch_matches_scalar_stream():
    params = ScheduleParams(p=0.3)
    r1 = np.random.default_rng(11)
    r2 = np.random.default_rng(11)
    d = 0.97
    for _ in range(500):
        a = schedule_step(d, r1, params)
        b = schedule_step_batch(np.array([d]), r2, params)[0]
        assert a == b
        d = a


def test_sample_initial_single_joint():
    rng = np.random.default_rng(5)
    d = sample_initial(rng, 2)
    assert d.shape == (N_JOINTS,)
    assert np.count_nonzero(d != 0.0) <= 1
    assert d[2] == d.max()
    means = np.mean([sample_initial(rng, "FRC")[2] for _ in range(10_000)])
    assert abs(means - 0.5) < 0.01


def test_sample_initial_reproducible():
    a = sample_initial(np.random.default_rng(9), 4)
    b = sample_initial(np.random.default_rng(9), 4)
    assert np.array_equal(a, b)


def test_scenario_step_function():
    sc = single_fault("RFC", 0.9, onset_step=200)
    assert np.array_equal(scenario_degradation(sc, 199), np.zeros(N_JOINTS))
    d = scenario_degradation(sc, 200)
    assert d[2] == 0.9 and np.count_nonzero(d) == 1
    assert np.array_equal(scenario_degradation(sc, 450), d)


def test_scenario_multi_and_all():
    sc = multi_fault([(0, 1.0), (7, 1.0)], onset_step=0)
    d = scenario_degradation(sc, 0)
    assert d[0] == 1.0 and d[7] == 1.0 and np.count_nonzero(d) == 2
    sc_all = all_joints_fault(0.6)
    assert np.allclose(scenario_degradation(sc_all, 3), 0.6)


def test_scenario_json_roundtrip():
    sc = multi_fault([("FRH", 0.9), ("RLC", 1.0)], onset_step=321)
    back = FaultScenario.from_json(sc.to_json())
    assert back == sc
    assert back.affected_joints == ((0, 0.9), (11, 1.0))


def test_scenario_validation():
    with pytest.raises(ValueError):
        multi_fault([(0, 0.5), (0, 0.7)])
    with pytest.raises(ValueError):
        single_fault(3, 1.5)
    with pytest.raises(ValueError):
        single_fault(3, 0.5, onset_step=-1)


@settings(max_examples=200)
@given(st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
def test_schedule_output_always_valid(d_prev, seed):
    params = ScheduleParams()
    out = schedule_step(d_prev, np.random.default_rng(seed), params)
    assert 0.0 <= out <= 1.0
