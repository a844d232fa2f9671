"""Task reward terms, style objective, and the discriminator gradients."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from faultgait.joints import N_JOINTS
from faultgait.nn.gradcheck import fd_jacobian, max_param_rel_error
from faultgait.rewards import (
    AMP_DIM,
    AmpStats,
    Discriminator,
    RewardConfig,
    TERM_NAMES,
    amp_features,
    build_expert_features,
    discriminator_loss,
    discriminator_loss_and_grad,
    style_reward,
    task_reward,
    task_reward_batch,
    transition_features,
)
from faultgait.sim.env import RobotState, StepBatch, StepInfo

# -- task reward ---------------------------------------------------------------


def _info(**overrides):
    """StepInfo at rest with perfect level posture; overrides per test."""
    fields = dict(
        observation=np.zeros(48),
        fall=False,
        diverged=False,
        foot_contacts=np.ones(4, dtype=bool),
        foot_forces=np.zeros((4, 3)),
        applied_torque=np.zeros(N_JOINTS),
        torque_sq=0.0,
        collisions=0,
        air_reward=0.0,
        v_body=np.array([0.5, 0.0, 0.0]),
        w_body=np.zeros(3),
        g_body=np.array([0.0, 0.0, -1.0]),
        qd=np.zeros(N_JOINTS),
        qd_prev=np.zeros(N_JOINTS),
        action=np.zeros(N_JOINTS),
        prev_action=np.zeros(N_JOINTS),
    )
    fields.update(overrides)
    return StepInfo(**fields)


CMD = np.array([0.5, 0.0, 0.0])


def test_config_defaults():
    cfg = RewardConfig()
    assert cfg.lin_vel_track == 1.0
    assert cfg.ang_vel_track == 0.5
    assert cfg.unexpected_ang_vel == -0.05
    assert cfg.orientation == -2.0
    assert cfg.torques == -1e-4
    assert cfg.accelerations == -2.5e-7
    assert cfg.feet_air_time == 1.0
    assert cfg.collisions == -0.5
    assert cfg.action_change == -0.01
    assert cfg.large_action == -0.3
    assert cfg.style_weight == 0.5
    assert cfg.alpha_gp == 10.0
    assert cfg.action_scale == 0.25


def test_perfect_tracking_totals():
    total, terms = task_reward(_info(), CMD)
    assert np.isclose(terms["lin_vel_track"], 1.0)
    assert np.isclose(terms["ang_vel_track"], 0.5)
    for name in TERM_NAMES[2:]:
        assert terms[name] == 0.0
    assert np.isclose(total, 1.5)


def test_velocity_error_kernel():
    total, terms = task_reward(_info(v_body=np.array([1.0, 0.0, 0.0])), CMD)
    assert np.isclose(terms["lin_vel_track"], np.exp(-1.0))
    _, terms = task_reward(_info(), np.array([0.5, 0.0, 0.3]))
    assert np.isclose(terms["ang_vel_track"], 0.5 * np.exp(-0.09 / 0.25))


def test_full_stack_hand_computed():
    qd = np.full(N_JOINTS, 0.2)
    qd_prev = np.full(N_JOINTS, 0.5)
    action = np.full(N_JOINTS, 0.4)
    prev_action = np.full(N_JOINTS, 0.1)
    info = _info(
        v_body=np.array([0.3, 0.1, 0.02]),
        w_body=np.array([0.2, -0.1, 0.15]),
        g_body=np.array([0.05, -0.02, -0.998]),
        torque_sq=140.0,
        qd=qd,
        qd_prev=qd_prev,
        air_reward=0.47,
        collisions=2,
        action=action,
        prev_action=prev_action,
    )
    total, terms = task_reward(info, np.array([0.5, 0.0, 0.2]))
    # every term recomputed with literal arithmetic
    assert np.isclose(terms["lin_vel_track"], np.exp(-((0.5 - 0.3) ** 2 + 0.1**2) / 0.25))
    assert np.isclose(terms["ang_vel_track"], 0.5 * np.exp(-((0.2 - 0.15) ** 2) / 0.25))
    assert np.isclose(terms["unexpected_ang_vel"], -0.05 * (0.2**2 + 0.1**2))
    assert np.isclose(terms["orientation"], -2.0 * (0.05**2 + 0.02**2))
    assert np.isclose(terms["torques"], -1e-4 * 140.0)
    assert np.isclose(terms["accelerations"], -2.5e-7 * 12 * 0.3**2)
    assert np.isclose(terms["feet_air_time"], 0.47)
    assert np.isclose(terms["collisions"], -1.0)
    assert np.isclose(terms["action_change"], -0.01 * 12 * (0.3 * 0.25) ** 2)
    assert np.isclose(terms["large_action"], -0.3 * 12 * 0.1**2)
    assert np.isclose(total, sum(terms.values()))


def _random_info(rng):
    return _info(
        v_body=rng.normal(size=3),
        w_body=rng.normal(size=3),
        g_body=rng.normal(size=3),
        torque_sq=float(rng.uniform(0, 500)),
        qd=rng.normal(size=N_JOINTS),
        qd_prev=rng.normal(size=N_JOINTS),
        air_reward=float(rng.normal()),
        collisions=int(rng.integers(0, 4)),
        action=rng.normal(size=N_JOINTS),
        prev_action=rng.normal(size=N_JOINTS),
    )


def test_breakdown_sums_exactly_to_total():
    rng = np.random.default_rng(3)
    for _ in range(25):
        total, terms = task_reward(_random_info(rng), rng.normal(size=3))
        acc = 0.0
        for name in TERM_NAMES:
            acc += terms[name]
        assert total == acc


def test_scaling_invariance():
    rng = np.random.default_rng(4)
    info = _random_info(rng)
    cmd = rng.normal(size=3)
    base = RewardConfig()
    c = 3.7
    scaled = RewardConfig(**{n: c * getattr(base, n) for n in TERM_NAMES})
    t0, _ = task_reward(info, cmd, cfg=base)
    t1, _ = task_reward(info, cmd, cfg=scaled)
    assert np.isclose(t1, c * t0, rtol=1e-12)


def _random_batch(rng, n):
    return StepBatch(
        obs=np.zeros((n, 48)),
        fall=np.zeros(n, dtype=bool),
        diverged=np.zeros(n, dtype=bool),
        contacts=np.ones((n, 4), dtype=bool),
        foot_forces=np.zeros((n, 4, 3)),
        normal_forces=np.zeros((n, 4)),
        applied_torque=np.zeros((n, N_JOINTS)),
        torque_sq=rng.uniform(0, 500, n),
        collisions=rng.integers(0, 4, n).astype(np.int32),
        air_reward=rng.normal(size=n),
        v_body=rng.normal(size=(n, 3)),
        w_body=rng.normal(size=(n, 3)),
        g_body=rng.normal(size=(n, 3)),
        qd=rng.normal(size=(n, N_JOINTS)),
        qd_prev=rng.normal(size=(n, N_JOINTS)),
        action=rng.normal(size=(n, N_JOINTS)),
        prev_action=rng.normal(size=(n, N_JOINTS)),
    )


def test_batch_matches_scalar():
    rng = np.random.default_rng(5)
    n = 6
    batch = _random_batch(rng, n)
    commands = rng.normal(size=(n, 3))
    totals, terms = task_reward_batch(batch, commands)
    assert totals.shape == (n,)
    for i in range(n):
        info = _info(
            torque_sq=float(batch.torque_sq[i]),
            collisions=int(batch.collisions[i]),
            air_reward=float(batch.air_reward[i]),
            v_body=batch.v_body[i],
            w_body=batch.w_body[i],
            g_body=batch.g_body[i],
            qd=batch.qd[i],
            qd_prev=batch.qd_prev[i],
            action=batch.action[i],
            prev_action=batch.prev_action[i],
        )
        total_i, terms_i = task_reward(info, commands[i])
        assert np.isclose(totals[i], total_i, rtol=1e-12, atol=1e-15)
        for name in TERM_NAMES:
            assert np.isclose(terms[name][i], terms_i[name], rtol=1e-12, atol=1e-15)


# -- style reward ----------------------------------------------------------------


def test_style_reward_values():
    assert style_reward(1.0) == 1.0
    assert style_reward(-1.0) == 0.0
    assert style_reward(0.0) == 0.75
    out = style_reward(np.array([1.0, -1.0, 0.0, 3.0]))
    assert np.allclose(out, [1.0, 0.0, 0.75, 0.0])


@given(st.floats(-1e6, 1e6))
def test_style_reward_bounded(d):
    r = style_reward(d)
    assert 0.0 <= r <= 1.0


# -- discriminator ----------------------------------------------------------------


def _zeroed(disc):
    for p in disc.store.params.values():
        p[...] = 0.0
    return disc


def test_zero_discriminator_loss_is_two():
    disc = _zeroed(Discriminator(np.random.default_rng(0), dtype=np.float64))
    rng = np.random.default_rng(1)
    expert = rng.normal(size=(8, AMP_DIM))
    policy = rng.normal(size=(5, AMP_DIM))
    assert np.isclose(discriminator_loss(expert, policy, disc, 0.0), 2.0)


def test_saturated_discriminator_reaches_zero_loss():
    # one saturated tanh unit keyed on feature 0: output is +-1 with zero
    # input gradient, the objective's optimum
    disc = _zeroed(Discriminator(np.random.default_rng(0), n_in=4, hidden=(1,), dtype=np.float64))
    disc.store.params["W0"][0, 0] = 50.0
    disc.store.params["W1"][0, 0] = 1.0
    rng = np.random.default_rng(2)
    expert = rng.normal(size=(6, 4))
    expert[:, 0] = 1.0
    policy = rng.normal(size=(6, 4))
    policy[:, 0] = -1.0
    assert discriminator_loss(expert, policy, disc, 10.0) < 1e-12


def test_linear_discriminator_matches_straight_line_oracle():
    rng = np.random.default_rng(6)
    disc = Discriminator(rng, n_in=AMP_DIM, hidden=(), dtype=np.float64)
    w = disc.store.params["W0"][:, 0]
    b = disc.store.params["b0"][0]
    expert = rng.normal(size=(16, AMP_DIM))
    policy = rng.normal(size=(9, AMP_DIM))
    alpha = 10.0
    want = (
        np.mean((expert @ w + b - 1.0) ** 2)
        + np.mean((policy @ w + b + 1.0) ** 2)
        + 0.5 * alpha * np.sum(w**2)
    )
    assert np.isclose(discriminator_loss(expert, policy, disc, alpha), want, rtol=1e-6)


def test_mlp_loss_matches_independent_evaluation():
    # recompute forward and per-sample input gradients without touching the
    # class internals: explicit tanh chain + finite differences
    rng = np.random.default_rng(7)
    disc = Discriminator(rng, n_in=6, hidden=(7, 5), dtype=np.float64)
    expert = rng.normal(size=(5, 6))
    policy = rng.normal(size=(4, 6))
    p = disc.store.params

    def score(x):
        h = np.tanh(np.tanh(x @ p["W0"] + p["b0"]) @ p["W1"] + p["b1"])
        return h @ p["W2"] + p["b2"]

    gp = np.mean([np.sum(fd_jacobian(score, x) ** 2) for x in expert])
    want = (
        np.mean((score(expert)[:, 0] - 1.0) ** 2)
        + np.mean((score(policy)[:, 0] + 1.0) ** 2)
        + 0.5 * 4.2 * gp
    )
    got = discriminator_loss(expert, policy, disc, 4.2)
    assert np.isclose(got, want, rtol=1e-6)


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(8)
    disc = Discriminator(rng, n_in=5, hidden=(6,), dtype=np.float64)
    x = rng.normal(size=(3, 5))
    g = disc.input_gradient(x)
    for i in range(3):
        fd = fd_jacobian(lambda v: disc.forward(v[None, :]), x[i])[0]
        assert np.allclose(g[i], fd, atol=1e-7)


def _gradcheck(hidden, alpha, seed):
    rng = np.random.default_rng(seed)
    disc = Discriminator(rng, n_in=5, hidden=hidden, dtype=np.float64)
    expert = rng.normal(size=(7, 5))
    policy = rng.normal(size=(4, 5))

    def loss_and_grad():
        disc.store.zero_grads()
        return discriminator_loss_and_grad(expert, policy, disc, alpha)[0]

    err = max_param_rel_error(disc.store, loss_and_grad, eps=1e-6)
    value = discriminator_loss(expert, policy, disc, alpha)
    assert np.isclose(loss_and_grad(), value, rtol=1e-12)
    assert err < 1e-6, f"gradient mismatch {err}"


def test_gradients_with_penalty():
    _gradcheck((8, 6), 3.7, seed=9)


def test_gradients_without_penalty():
    _gradcheck((8, 6), 0.0, seed=10)


def test_gradients_linear():
    _gradcheck((), 2.0, seed=11)


def test_gradients_three_hidden_layers():
    _gradcheck((6, 5, 4), 1.3, seed=12)


def test_loss_nonnegative():
    rng = np.random.default_rng(13)
    for seed in range(3):
        disc = Discriminator(np.random.default_rng(seed), n_in=8, hidden=(6,), dtype=np.float64)
        loss = discriminator_loss(rng.normal(size=(5, 8)), rng.normal(size=(5, 8)), disc, 5.0)
        assert loss >= 0.0


def test_empty_batch_raises():
    disc = Discriminator(np.random.default_rng(0))
    good = np.zeros((3, AMP_DIM))
    with pytest.raises(ValueError):
        discriminator_loss(np.zeros((0, AMP_DIM)), good, disc, 1.0)
    with pytest.raises(ValueError):
        discriminator_loss_and_grad(good, np.zeros((0, AMP_DIM)), disc, 1.0)


# -- transition features -----------------------------------------------------------


def _state(yaw=0.0, vel=(0.5, 0.0, 0.0), q=None):
    return RobotState(
        q=np.zeros(N_JOINTS) if q is None else q,
        qd=np.zeros(N_JOINTS),
        base_pos=np.array([0.0, 0.0, 0.27]),
        base_rpy=np.array([0.0, 0.0, yaw]),
        base_lin_vel=np.asarray(vel, dtype=np.float64),
        base_ang_vel=np.zeros(3),
        foot_contacts=np.ones(4, dtype=bool),
        foot_forces=np.zeros(4),
    )


def test_identical_states_give_equal_halves():
    s = _state(q=np.linspace(-1, 1, N_JOINTS))
    feats = amp_features(s, s)
    assert feats.shape == (AMP_DIM,)
    assert np.array_equal(feats[:30], feats[30:])


def test_features_use_body_frame_velocity():
    # base yawed 90 degrees moving along world y = moving along its own x
    s = _state(yaw=np.pi / 2, vel=(0.0, 1.0, 0.0))
    feats = amp_features(s, s)
    assert np.allclose(feats[24:27], [1.0, 0.0, 0.0], atol=1e-12)
    assert np.allclose(feats[54:57], [1.0, 0.0, 0.0], atol=1e-12)


def test_expert_chunks_are_consecutive_transitions():
    feats = build_expert_features(n_transitions=20, seed=3, chunk=10)
    for t in range(8):
        assert np.allclose(feats[t, 30:], feats[t + 1, :30])


def test_expert_set_is_finite_and_normalizes():
    feats = build_expert_features(n_transitions=3000, seed=1)
    assert feats.shape == (3000, AMP_DIM)
    assert np.all(np.isfinite(feats))
    stats = AmpStats.from_features(feats)
    normed = stats.normalize(feats)
    assert np.max(np.abs(normed)) < 10.0
    # lateral velocity is identically zero on the expert set; the std floor
    # maps it to exactly zero
    assert np.all(normed[:, 25] == 0.0)


def test_stats_roundtrip():
    feats = np.random.default_rng(14).normal(size=(50, AMP_DIM))
    stats = AmpStats.from_features(feats)
    again = AmpStats.from_arrays(stats.to_arrays())
    assert np.array_equal(stats.mean, again.mean)
    assert np.array_equal(stats.std, again.std)


def test_transition_features_batched():
    rng = np.random.default_rng(15)
    q = rng.normal(size=(4, N_JOINTS))
    qd = rng.normal(size=(4, N_JOINTS))
    v = rng.normal(size=(4, 3))
    w = rng.normal(size=(4, 3))
    feats = transition_features(q, qd, v, w, q, qd, v, w)
    assert feats.shape == (4, AMP_DIM)
    assert np.array_equal(feats[:, :30], feats[:, 30:])
