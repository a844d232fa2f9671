"""Teacher PPO: advantage oracles, gradient checks and training smoke tests."""

import numpy as np
import pytest

from faultgait.joints import N_JOINTS
from faultgait.nn.gradcheck import max_param_rel_error
from faultgait.rewards import AmpStats
from faultgait.sim.env import OBS_DIM
from faultgait.teacher import (
    CURVE_FIELDS,
    POLICY_INPUT,
    PpoConfig,
    TeacherPolicy,
    TrainingDiverged,
    evaluate_tracking,
    gae,
    gaussian_logp,
    load_teacher,
    ppo_loss_and_grad,
    ppo_update,
    read_curves,
    save_teacher,
    teacher_act,
    train_policy,
    train_teacher,
    write_curves,
)


def tiny_cfg(**overrides):
    base = dict(n_envs=4, n_steps=6, iterations=2, hidden=(16, 12),
                epochs=2, minibatches=2, expert_transitions=40,
                disc_batch=16, disc_updates=1)
    base.update(overrides)
    return PpoConfig(**base)


def tiny_policy(seed=0, hidden=(10, 8), dtype=np.float32):
    return TeacherPolicy(3, rng=np.random.default_rng(seed), hidden=hidden,
                         dtype=dtype)


def synthetic_batch(policy, m, rng, logp_shift=0.0):
    obs = rng.standard_normal((m, OBS_DIM)) * 0.2
    d = rng.random(m)
    x = policy.inputs(obs, d)
    mean = policy.pi.forward(x)
    std = np.exp(policy.log_std)
    actions = (mean + std * rng.standard_normal((m, N_JOINTS))).astype(np.float32)
    logp = gaussian_logp(actions, mean, policy.log_std).astype(np.float64)
    values = policy.values(x).astype(np.float64)
    return {
        "inputs": x,
        "actions": actions,
        "logp": logp + logp_shift,
        "advantages": rng.standard_normal(m),
        "returns": values + rng.standard_normal(m) * 0.3,
        "values": values,
    }


# -- generalized advantage estimation ------------------------------------


def test_gae_lambda_zero_is_one_step_td():
    rng = np.random.default_rng(0)
    T, n = 9, 3
    r = rng.standard_normal((T, n))
    v = rng.standard_normal((T + 1, n))
    dones = rng.random((T, n)) < 0.3
    adv = gae(r, v, dones, gamma=0.97, lam=0.0)
    expected = r + 0.97 * v[1:] * (1.0 - dones) - v[:-1]
    assert np.allclose(adv, expected, rtol=1e-12, atol=1e-12)


def test_gae_gamma_zero_ignores_future():
    rng = np.random.default_rng(1)
    r = rng.standard_normal((7, 2))
    v = rng.standard_normal((8, 2))
    adv = gae(r, v, np.zeros((7, 2), dtype=bool), gamma=1e-12, lam=0.95)
    assert np.allclose(adv, r - v[:-1], atol=1e-9)


def test_gae_matches_bruteforce_sum():
    rng = np.random.default_rng(2)
    T = 12
    gamma, lam = 0.99, 0.95
    r = rng.standard_normal(T)
    v = rng.standard_normal(T + 1)
    dones = rng.random(T) < 0.25
    delta = r + gamma * v[1:] * (1.0 - dones) - v[:-1]
    expected = np.zeros(T)
    for t in range(T):
        coeff = 1.0
        for k in range(t, T):
            expected[t] += coeff * delta[k]
            if dones[k]:
                break
            coeff *= gamma * lam
    adv = gae(r, v, dones, gamma, lam)
    assert np.allclose(adv, expected, rtol=1e-12, atol=1e-12)


def test_gae_rejects_mismatched_lengths():
    with pytest.raises(ValueError):
        gae(np.zeros(5), np.zeros(5), np.zeros(5, dtype=bool), 0.99, 0.95)
    with pytest.raises(ValueError):
        gae(np.zeros(5), np.zeros(6), np.zeros(4, dtype=bool), 0.99, 0.95)


def test_gaussian_logp_matches_density():
    rng = np.random.default_rng(3)
    mean = rng.standard_normal((4, N_JOINTS))
    log_std = rng.standard_normal(N_JOINTS) * 0.3
    actions = mean + rng.standard_normal((4, N_JOINTS))
    std = np.exp(log_std)
    densities = np.exp(-0.5 * ((actions - mean) / std) ** 2) / (np.sqrt(2 * np.pi) * std)
    assert np.allclose(gaussian_logp(actions, mean, log_std),
                       np.log(densities).sum(axis=1), rtol=1e-10)


# -- PPO loss and update ---------------------------------------------------


def test_surrogate_at_ratio_one_is_minus_mean_advantage():
    rng = np.random.default_rng(4)
    policy = tiny_policy()
    mb = synthetic_batch(policy, 16, rng)
    parts = ppo_loss_and_grad(policy, mb, PpoConfig())
    assert abs(parts["surrogate"] + mb["advantages"].mean()) < 1e-6


def test_no_policy_gradient_outside_trust_region():
    rng = np.random.default_rng(5)
    policy = tiny_policy()
    cfg = PpoConfig()
    mb = synthetic_batch(policy, 16, rng, logp_shift=-1.5)
    mb["advantages"] = np.ones(16)
    # ratio = e**1.5 with positive advantages: every sample is clipped
    ppo_loss_and_grad(policy, mb, cfg)
    for name in policy.store.params:
        if name.startswith("pi.") and name != "pi.log_std":
            assert np.all(policy.store.grads[name] == 0.0), name
    assert np.allclose(policy.store.grads["pi.log_std"], -cfg.entropy_coef)
    assert np.any(policy.store.grads["vf.l0.W"] != 0.0)


def test_ppo_gradients_match_finite_differences():
    rng = np.random.default_rng(6)
    policy = TeacherPolicy(0, rng=np.random.default_rng(7), hidden=(8, 6),
                           dtype=np.float64)
    mb = synthetic_batch(policy, 7, rng, logp_shift=0.1)
    cfg = PpoConfig(clip=0.3)
    # the 0.01-scaled mean head leaves some gradients near 1e-7, where
    # 1e-6 central differences are all cancellation noise; a wider step
    # keeps the noise two orders below the threshold
    err = max_param_rel_error(
        policy.store, lambda: ppo_loss_and_grad(policy, mb, cfg)["loss"],
        eps=1e-4)
    assert err < 1e-4


def test_ppo_update_improves_objective():
    rng = np.random.default_rng(8)
    policy = tiny_policy(seed=9)
    cfg = PpoConfig(epochs=3, minibatches=2, lr=1e-3)
    batch = synthetic_batch(policy, 64, rng)
    before = ppo_loss_and_grad(policy, batch, cfg)
    from faultgait.nn import Adam

    ppo_update(policy, Adam(policy.store, lr=cfg.lr), batch, cfg,
               np.random.default_rng(10))
    after = ppo_loss_and_grad(policy, batch, cfg)
    assert after["surrogate"] < before["surrogate"]
    assert after["value_loss"] < before["value_loss"]


def test_ppo_update_raises_on_non_finite():
    rng = np.random.default_rng(11)
    policy = tiny_policy()
    batch = synthetic_batch(policy, 8, rng)
    policy.store.params["pi.l0.W"][:] = np.nan
    from faultgait.nn import Adam

    with pytest.raises(TrainingDiverged):
        ppo_update(policy, Adam(policy.store), batch, PpoConfig(),
                   np.random.default_rng(0))


def test_config_validation():
    with pytest.raises(ValueError):
        PpoConfig(gamma=0.0)
    with pytest.raises(ValueError):
        PpoConfig(lam=1.2)
    with pytest.raises(ValueError):
        PpoConfig(clip=0.0)
    with pytest.raises(ValueError):
        PpoConfig(minibatches=0)


# -- policy interface -------------------------------------------------------


def test_teacher_act_contract():
    policy = tiny_policy()
    obs = np.zeros(OBS_DIM)
    a = teacher_act(policy, obs, 0.5)
    assert a.shape == (N_JOINTS,) and a.dtype == np.float64
    assert np.array_equal(a, teacher_act(policy, obs, 0.5))
    with pytest.raises(ValueError):
        teacher_act(policy, np.zeros(OBS_DIM - 1), 0.5)
    with pytest.raises(ValueError):
        teacher_act(policy, obs, 1.5)
    with pytest.raises(ValueError):
        teacher_act(policy, obs, -0.1)
    with pytest.raises(ValueError):
        teacher_act(policy, obs, 0.5, stochastic=True)
    noisy = teacher_act(policy, obs, 0.5, stochastic=True,
                        rng=np.random.default_rng(0))
    assert not np.array_equal(noisy, a)


def test_actions_depend_on_degradation_rate():
    policy = tiny_policy()
    obs = np.random.default_rng(12).standard_normal(OBS_DIM) * 0.1
    assert not np.array_equal(teacher_act(policy, obs, 0.0),
                              teacher_act(policy, obs, 1.0))


def test_inputs_layout():
    policy = tiny_policy()
    x = policy.inputs(np.zeros(OBS_DIM), [0.75])
    assert x.shape == (1, POLICY_INPUT) and x.dtype == np.float32
    assert x[0, -1] == np.float32(0.75)
    rng = np.random.default_rng(13)
    xb = policy.inputs(rng.standard_normal((5, OBS_DIM)), rng.random(5))
    assert xb.shape == (5, POLICY_INPUT)


# -- checkpoints and curves --------------------------------------------------


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(14)
    policy = tiny_policy(seed=15, hidden=(9, 7))
    stats = AmpStats.from_features(rng.standard_normal((50, 60)))
    path = tmp_path / "teacher.ckpt"
    save_teacher(path, policy, stats)
    loaded, loaded_stats = load_teacher(path)
    assert loaded.joint == policy.joint
    assert loaded.hidden == policy.hidden
    obs = rng.standard_normal(OBS_DIM)
    assert np.array_equal(teacher_act(loaded, obs, 0.3),
                          teacher_act(policy, obs, 0.3))
    assert np.allclose(loaded_stats.mean, stats.mean, rtol=1e-6)
    assert np.allclose(loaded_stats.std, stats.std, rtol=1e-6)


def test_save_load_without_stats(tmp_path):
    policy = TeacherPolicy(None, rng=np.random.default_rng(16), hidden=(6,))
    path = tmp_path / "p.ckpt"
    save_teacher(path, policy)
    loaded, stats = load_teacher(path)
    assert loaded.joint is None and stats is None
    assert loaded.hidden == (6,)


def test_curves_roundtrip(tmp_path):
    rng = np.random.default_rng(17)
    rows = []
    for it in range(3):
        row = {k: float(rng.standard_normal() * 10.0 ** rng.integers(-6, 6))
               for k in CURVE_FIELDS}
        row["iteration"] = it
        row["falls"] = int(rng.integers(0, 50))
        rows.append(row)
    path = tmp_path / "curves.csv"
    write_curves(path, rows)
    header = path.read_text().splitlines()[0]
    assert header == ",".join(CURVE_FIELDS)
    back = read_curves(path)
    assert len(back) == 3
    for row, copy in zip(rows, back):
        for k in CURVE_FIELDS:
            assert copy[k] == pytest.approx(row[k], rel=1e-8)


# -- training loop ------------------------------------------------------------


def test_zero_iterations_returns_fresh_policy():
    policy, stats, curves = train_teacher(4, cfg=tiny_cfg(iterations=0), seed=0)
    assert curves == []
    assert policy.joint == 4
    assert isinstance(stats, AmpStats)
    assert "pi.log_std" in policy.store.params


def test_train_teacher_accepts_joint_names():
    policy, _, _ = train_teacher("FRC", cfg=tiny_cfg(iterations=0), seed=0)
    assert policy.joint == 2


def test_training_is_deterministic():
    runs = [train_teacher(2, cfg=tiny_cfg(), seed=123) for _ in range(2)]
    (p0, _, c0), (p1, _, c1) = runs
    for name, value in p0.store.state_dict().items():
        assert np.array_equal(value, p1.store.state_dict()[name]), name
    assert c0 == c1
    p2, _, _ = train_teacher(2, cfg=tiny_cfg(), seed=124)
    assert any(not np.array_equal(v, p2.store.state_dict()[k])
               for k, v in p0.store.state_dict().items())


def test_curriculum_level_advances_when_forced():
    cfg = tiny_cfg(iterations=3, curriculum_threshold=-1.0)
    _, _, curves = train_teacher(0, cfg=cfg, seed=5)
    assert [round(c["level"], 3) for c in curves] == [0.0, 0.1, 0.2]


def test_stop_tracking_halts_after_five_iterations():
    cfg = tiny_cfg(iterations=9, stop_tracking=1e-12, level_start=1.0)
    _, _, curves = train_teacher(0, cfg=cfg, seed=6)
    assert len(curves) == 5


def test_stop_tracking_waits_for_full_difficulty():
    # the same threshold must not fire while the command level is still low
    cfg = tiny_cfg(iterations=9, stop_tracking=1e-12, level_start=0.0,
                   curriculum_threshold=2.0)
    _, _, curves = train_teacher(0, cfg=cfg, seed=6)
    assert len(curves) == 9


def test_curve_rows_have_fixed_fields():
    _, _, curves = train_teacher(1, cfg=tiny_cfg(iterations=1), seed=7)
    assert set(curves[0]) == set(CURVE_FIELDS)
    assert all(np.isfinite(v) for v in curves[0].values())


def test_mixed_joint_training_smoke():
    sampler_calls = []

    def sampler(rng):
        j = int(rng.integers(N_JOINTS))
        sampler_calls.append(j)
        return j

    policy, _, curves = train_policy(sampler, None, cfg=tiny_cfg(iterations=1),
                                     seed=8)
    assert policy.joint is None
    assert len(sampler_calls) >= 4
    assert len(curves) == 1


def test_evaluate_tracking_bounded():
    policy = tiny_policy(seed=18)
    score = evaluate_tracking(policy, n_episodes=2, seed=3)
    assert 0.0 <= score <= 1.0
