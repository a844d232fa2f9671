"""PPO training of degradation-conditioned teacher policies.

One teacher owns a single joint: its policy input is the 48-dim scaled
observation plus that joint's current degradation rate, and during training
the rate is resampled by the adaptive schedule in ``degradation``.  The
policy is a diagonal Gaussian whose mean comes from an MLP and whose log-std
is a free state-independent parameter; a second MLP of the same shape is the
value function.

The update is standard clipped-surrogate PPO with GAE, a clipped value loss
and an entropy bonus, all with hand-written gradients on top of the ``nn``
layer caches.  Truncated episodes (time limit without a fall) bootstrap the
reward with the value of the post-step observation under the already-advanced
degradation rate, so the advantage recursion can treat every ``done`` as a
hard cut.

``train_policy`` is the generic loop; ``train_teacher`` fixes the active
joint, and the single-policy baseline reuses the loop with a uniform joint
sampler.  Training curves deliberately carry no wall-clock fields so repeated
runs with one seed produce byte-identical artifacts.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .degradation import ScheduleParams, schedule_step_batch
from .joints import HIP_INDICES, N_JOINTS, THIGH_INDICES, joint_index
from .nn import Adam, Mlp, ParameterStore, clip_grad_norm, load_checkpoint, save_checkpoint
from .obs import scale_obs
from .rewards import (
    AMP_DIM,
    AmpStats,
    Discriminator,
    RewardConfig,
    TERM_NAMES,
    build_expert_features,
    discriminator_loss_and_grad,
    style_reward,
    task_reward_batch,
    transition_features,
)
from .sim.config import Command, DomainParams, randomize_domain, scaled_randomization
from .sim.env import OBS_DIM, VecEnv
from .sim.gait import GAIT_PERIOD, reference_gait

POLICY_INPUT = OBS_DIM + 1

CURVE_FIELDS = ("iteration",) + TERM_NAMES + (
    "task", "style", "reward", "level", "dom_level",
    "surrogate", "value_loss", "entropy", "anchor_loss",
    "disc_loss", "disc_grad_penalty", "falls",
)

_LOG_2PI = float(np.log(2.0 * np.pi))


class TrainingDiverged(RuntimeError):
    """Raised when an update produces non-finite numbers.

    ``state`` holds the parameter snapshot taken before the fatal iteration,
    so a caller can persist the last usable policy.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    epochs: int = 5
    minibatches: int = 4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    lr: float = 3e-4
    grad_clip: float = 1.0
    n_envs: int = 64
    n_steps: int = 24
    iterations: int = 1500
    hidden: tuple = (512, 256, 128)
    log_std_init: float = 0.0
    value_clip: float = 0.2
    value_warmup: int = 0       # iterations with the policy frozen
    curriculum_threshold: float = 0.6
    curriculum_step: float = 0.1
    level_start: float = 0.0
    domain_curriculum: bool = False  # physics + fault ranges trail the level
    fall_budget: float = 0.002  # falls per env step allowed before domains widen
    schedule_p: float = 0.02
    schedule_delta: float = 1e-4
    max_rate: float = 1.0       # cap on training degradation; 0 trains fault-free
    expert_transitions: int = 100_000
    disc_lr: float = 3e-4
    disc_updates: int = 2
    disc_batch: int = 256
    bootstrap_steps: int = 0    # env steps of scripted-gait cloning; 0 disables
    bootstrap_iters: int = 2000
    bootstrap_batch: int = 256
    bootstrap_lr: float = 1e-3
    bootstrap_noise: float = 0.1
    anchor_coef: float = 0.0    # auxiliary clone loss during PPO; 0 disables
    anchor_iters: int = 0       # linear anneal of anchor_coef; 0 holds it constant
    anchor_rate_max: float = 0.25  # donor anchor covers visited states below this rate
    stop_tracking: float = 0.0  # early stop once reached; 0 disables

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0 or not 0.0 <= self.lam <= 1.0:
            raise ValueError("gamma must be in (0, 1] and lam in [0, 1]")
        if self.clip <= 0.0:
            raise ValueError("clip ratio must be positive")
        if self.epochs < 0 or self.minibatches < 1:
            raise ValueError("bad epoch or minibatch count")


class TeacherPolicy:
    """Gaussian policy and value function over (observation, rate) inputs."""

    def __init__(self, joint=None, rng=None, hidden=(512, 256, 128),
                 log_std_init=0.0, dtype=np.float32):
        if rng is None:
            rng = np.random.default_rng(0)
        self.joint = None if joint is None else int(joint)
        self.hidden = tuple(int(h) for h in hidden)
        self.store = ParameterStore(dtype=dtype)
        body = (POLICY_INPUT,) + self.hidden
        # small head scale starts the mean near the nominal pose
        self.pi = Mlp(self.store, "pi", body + (N_JOINTS,), rng,
                      activation="elu", out_scale=0.01)
        self.vf = Mlp(self.store, "vf", body + (1,), rng, activation="elu")
        self.log_std = self.store.add("pi.log_std", np.full(N_JOINTS, log_std_init))

    def inputs(self, obs, d_active):
        """Network input rows: scaled observations with the rate appended."""
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        d = np.asarray(d_active, dtype=np.float64).reshape(len(obs), 1)
        x = np.concatenate([scale_obs(obs), d], axis=1)
        return x.astype(self.store.dtype)

    def values(self, x):
        return self.vf.forward(x)[:, 0]

    def act_batch(self, obs, d_active):
        """Deterministic mean actions, shape (n, 12)."""
        return self.pi.forward(self.inputs(obs, d_active))


def teacher_act(policy, obs, d_active, stochastic=False, rng=None):
    """Action (12,) for one raw observation and the active joint's rate."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (OBS_DIM,):
        raise ValueError(f"expected observation of shape ({OBS_DIM},), got {obs.shape}")
    d = float(d_active)
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"degradation rate must be in [0, 1], got {d}")
    mean = policy.pi.forward(policy.inputs(obs[None, :], [d]))[0]
    if not stochastic:
        return mean.astype(np.float64)
    if rng is None:
        raise ValueError("stochastic actions need an rng")
    std = np.exp(policy.log_std)
    return (mean + std * rng.standard_normal(N_JOINTS)).astype(np.float64)


def gaussian_logp(actions, mean, log_std):
    """Row-wise diagonal Gaussian log density."""
    z = (actions - mean) / np.exp(log_std)
    return -0.5 * (z * z).sum(axis=-1) - log_std.sum() - 0.5 * N_JOINTS * _LOG_2PI


def gae(rewards, values, dones, gamma, lam):
    """Generalized advantage estimates over a (T, n) rollout.

    ``values`` must carry one extra row with the bootstrap value of the final
    observation.  ``dones`` cuts the recursion; truncation bootstraps are the
    caller's business (fold them into the reward).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    T = len(rewards)
    if len(values) != T + 1 or len(dones) != T:
        raise ValueError("need len(values) == len(rewards) + 1 == len(dones) + 1")
    adv = np.zeros_like(rewards)
    acc = np.zeros_like(rewards[0])
    for t in range(T - 1, -1, -1):
        keep = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * keep - values[t]
        acc = delta + gamma * lam * keep * acc
        adv[t] = acc
    return adv


def ppo_loss_and_grad(policy, mb, cfg):
    """Clipped-surrogate loss on one minibatch, gradients into the store.

    Zeroes the store's gradients first.  The surrogate gradient only flows
    through samples whose ratio is inside the trust region for the sign of
    their advantage; the value loss is clipped around the rollout values the
    same way.  Returns the scalar parts for logging.
    """
    store = policy.store
    store.zero_grads()
    x = mb["inputs"]
    actions = mb["actions"]
    adv = mb["advantages"]
    m = len(x)

    mean = policy.pi.forward(x)
    log_std = store.params["pi.log_std"]
    std = np.exp(log_std)
    z = (actions - mean) / std
    logp = -0.5 * (z * z).sum(axis=1) - log_std.sum() - 0.5 * N_JOINTS * _LOG_2PI
    ratio = np.exp(logp - mb["logp"])
    clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)
    surrogate = -float(np.minimum(ratio * adv, clipped * adv).mean())

    # gradient passes only where the unclipped branch is the active minimum
    active = np.where(adv >= 0.0, ratio < 1.0 + cfg.clip, ratio > 1.0 - cfg.clip)
    dlogp = -(ratio * adv * active) / m
    dmean = (dlogp[:, None] * z / std).astype(store.dtype)
    policy.pi.backward(dmean)
    store.grads["pi.log_std"] += (dlogp[:, None] * (z * z - 1.0)).sum(axis=0)

    # entropy of a diagonal Gaussian depends on log_std alone
    entropy = float(log_std.sum() + 0.5 * N_JOINTS * (1.0 + _LOG_2PI))
    store.grads["pi.log_std"] -= cfg.entropy_coef

    v = policy.vf.forward(x)[:, 0]
    err = v - mb["returns"]
    v_clip = mb["values"] + np.clip(v - mb["values"], -cfg.value_clip, cfg.value_clip)
    err_clip = v_clip - mb["returns"]
    value_loss = float(np.maximum(err * err, err_clip * err_clip).mean())
    use_raw = err * err >= err_clip * err_clip
    pass_clip = np.abs(v - mb["values"]) < cfg.value_clip
    dv = 2.0 * np.where(use_raw, err, err_clip * pass_clip) * (cfg.value_coef / m)
    policy.vf.backward(dv[:, None].astype(store.dtype))

    loss = surrogate + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
    return {"loss": loss, "surrogate": surrogate,
            "value_loss": value_loss, "entropy": entropy}


def ppo_update(policy, optimizer, batch, cfg, rng, freeze_policy=False,
               anchor=None):
    """Epochs of shuffled minibatch steps; returns mean logged parts.

    With ``freeze_policy`` only the value function trains: pi gradients are
    dropped and pi parameters restored afterwards, so stale optimizer
    momentum cannot drag the policy either.  ``anchor`` is an optional
    ``(inputs, actions, coef)`` clone set whose weighted mean squared error
    is added to every minibatch, holding the policy near a known gait while
    the value estimate and the curriculum catch up.
    """
    m = len(batch["inputs"])
    adv = batch["advantages"].astype(np.float64)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    data = dict(batch, advantages=adv)
    pinned = None
    if freeze_policy:
        pinned = {k: v.copy() for k, v in policy.store.params.items()
                  if k.startswith("pi.")}
    totals = {"surrogate": 0.0, "value_loss": 0.0, "entropy": 0.0,
              "anchor_loss": 0.0}
    steps = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(m)
        for idx in np.array_split(order, cfg.minibatches):
            parts = ppo_loss_and_grad(policy, {k: v[idx] for k, v in data.items()}, cfg)
            parts["anchor_loss"] = 0.0
            if anchor is not None:
                a_x, a_a, coef = anchor
                mb = rng.integers(0, len(a_x), cfg.bootstrap_batch)
                diff = policy.pi.forward(a_x[mb]) - a_a[mb]
                parts["anchor_loss"] = float((diff * diff).mean())
                if coef > 0.0:
                    policy.pi.backward((coef * 2.0 / diff.size) * diff)
            if not np.isfinite(parts["loss"]) or not np.isfinite(parts["anchor_loss"]):
                raise TrainingDiverged("non-finite loss in policy update")
            if pinned is not None:
                for k in pinned:
                    policy.store.grads[k][...] = 0.0
            clip_grad_norm(policy.store, cfg.grad_clip)
            optimizer.step()
            for k in totals:
                totals[k] += parts[k]
            steps += 1
    if pinned is not None:
        for k, v in pinned.items():
            policy.store.params[k][...] = v
    return {k: v / max(steps, 1) for k, v in totals.items()}


# reference-controller feedback gains: trunk attitude folded into the leg
# angles, speed error shifting the thigh targets, drift pushing the hips
_BOOT_ROLL = 0.6
_BOOT_PITCH = 0.4
_BOOT_SPEED = 0.2
_BOOT_LATERAL = 0.15


def _reference_actions(env, obs):
    """Scripted trot with attitude feedback, in action units."""
    nominal = np.asarray(env.cfg.nominal_pose)
    dt = env.cfg.control_dt()
    phases = (env.episode_step * dt / GAIT_PERIOD) % 1.0
    targets = np.empty((env.n, N_JOINTS))
    for i in range(env.n):
        targets[i] = reference_gait(phases[i], Command(*env.command[i]), env.cfg)
    roll, pitch = env.rpy[:, 0], env.rpy[:, 1]
    vx_err = obs[:, 0] - env.command[:, 0]
    targets[:, list(HIP_INDICES)] += (-_BOOT_ROLL * roll
                                      + _BOOT_LATERAL * obs[:, 1])[:, None]
    targets[:, list(THIGH_INDICES)] += (-_BOOT_PITCH * pitch
                                        + _BOOT_SPEED * vx_err)[:, None]
    a = (targets - nominal) / env.cfg.action_scale
    return np.clip(a, -env.cfg.action_clip, env.cfg.action_clip)


# anchor set: keep only steady cycles at commands the reference handles
_ANCHOR_MIN_VX = 0.6
_DOOM_WINDOW = 20   # steps before a collection fall to discard


def _bootstrap(policy, optimizer, env, rng, cfg):
    """Warm start: behavior-clone the reference controller.

    From-scratch PPO at 64 envs reliably parks in a standing optimum (the
    fall penalty moat around it is much larger than the exploration noise
    can cross), so the mean head is first regressed onto a crude stabilized
    trot and PPO then refines a policy that already walks.  The controller
    reads the gait phase off the episode clock; the cloned policy sees only
    (obs, d), which pins the phase through q and qd once on the cycle.
    Collection runs undegraded: the fault response is PPO's job, the warm
    start only supplies the nominal gait.  The rollout is driven by the
    reference plus exploration noise while the labels stay clean, so the
    data covers a recovery tube around the cycle rather than the bare
    limit cycle.

    Returns the anchor subset ``(inputs, actions)``: fast-command pairs
    (where the reference is stable and walking beats shuffling on reward)
    not taken shortly before a collection fall.  Slow commands are left
    out on purpose: the scripted gait is unstable there and the reward
    optimum is a conservative shuffle, which PPO finds on its own.
    """
    n = env.n
    steps = max(1, cfg.bootstrap_steps // n)
    xs = np.empty((steps * n, POLICY_INPUT), dtype=np.float32)
    acts = np.empty((steps * n, N_JOINTS), dtype=np.float32)
    vx = np.empty((steps, n))
    good = np.ones((steps, n), dtype=bool)
    rows = np.arange(n)
    # nominal physics only: the clone needs clean cycles, not robustness
    env.reset_envs(rows, level=1.0, domains=[DomainParams()] * n)
    obs = env.observations()
    d0 = np.zeros(n)
    for t in range(steps):
        a = _reference_actions(env, obs)
        xs[t * n:(t + 1) * n] = policy.inputs(obs, d0)
        acts[t * n:(t + 1) * n] = a
        vx[t] = env.command[:, 0]
        sb = env.step(a + cfg.bootstrap_noise * rng.standard_normal(a.shape))
        done = sb.fall | (env.episode_step >= env.cfg.max_episode_steps())
        obs = sb.obs
        fell = np.flatnonzero(sb.fall)
        if fell.size:
            good[max(0, t - _DOOM_WINDOW):t + 1, fell] = False
        done_idx = np.flatnonzero(done)
        if done_idx.size:
            env.reset_envs(done_idx, level=1.0,
                           domains=[DomainParams()] * done_idx.size)
            obs[done_idx] = env.observations()[done_idx]
    for _ in range(cfg.bootstrap_iters):
        mb = rng.integers(0, len(xs), cfg.bootstrap_batch)
        diff = policy.pi.forward(xs[mb]) - acts[mb]
        policy.store.zero_grads()
        policy.pi.backward((2.0 / diff.size) * diff)
        optimizer.step(lr=cfg.bootstrap_lr)
    keep = (good & (vx >= _ANCHOR_MIN_VX)).reshape(-1)
    return xs[keep], acts[keep]


def _donor_anchor_set(donor, env, rng, cfg):
    """Static anchor states from the donor's own fault-free orbit.

    Drives the donor mean plus exploration noise at degradation zero over
    the full command and domain ranges and labels every visited state with
    the donor's mean there.  Unlike the visited-state anchor assembled
    every iteration, this set never drifts, so it pins the original gait
    even after the fine-tuned policy's rollouts have wandered.
    """
    n = env.n
    steps = max(1, cfg.bootstrap_steps // n)
    xs = np.empty((steps * n, POLICY_INPUT), dtype=np.float32)
    acts = np.empty((steps * n, N_JOINTS), dtype=np.float32)
    good = np.ones((steps, n), dtype=bool)
    rows = np.arange(n)
    env.reset_envs(rows, level=1.0)
    obs = env.observations()
    d0 = np.zeros(n)
    for t in range(steps):
        x = donor.inputs(obs, d0)
        a = donor.pi.forward(x)
        xs[t * n:(t + 1) * n] = x
        acts[t * n:(t + 1) * n] = a
        sb = env.step(a + cfg.bootstrap_noise * rng.standard_normal(a.shape))
        done = sb.fall | (env.episode_step >= env.cfg.max_episode_steps())
        obs = sb.obs
        fell = np.flatnonzero(sb.fall)
        if fell.size:
            good[max(0, t - _DOOM_WINDOW):t + 1, fell] = False
        done_idx = np.flatnonzero(done)
        if done_idx.size:
            env.reset_envs(done_idx, level=1.0)
            obs[done_idx] = env.observations()[done_idx]
    keep = good.reshape(-1)
    return xs[keep], acts[keep]


def train_policy(joint_sampler, joint, cfg=None, reward_cfg=None, seed=0,
                 sim_cfg=None, rand_cfg=None, backend=None, progress=None,
                 warm_start=None):
    """Run the PPO + style-discriminator loop and return (policy, stats, curves).

    ``joint_sampler(rng)`` picks the active joint for every fresh episode;
    the teacher uses a constant sampler, the single-policy baseline a uniform
    one.  ``joint`` is stamped on the returned policy (None for mixed).
    Episodes start at a uniform degradation rate of the active joint and the
    rate then follows the adaptive schedule every control step.

    Commands follow the tracking-gated curriculum ``level``.  With
    ``domain_curriculum`` the physics ranges and the fault intensity trail
    behind on a second track that only widens while the fall rate stays
    under ``fall_budget``; at full level both tracks coincide with the
    plain fixed-range regime.

    ``warm_start`` is a parameter state dict (matching architecture) loaded
    before training.  With ``anchor_coef > 0`` a warm start is also kept as
    a frozen donor, and every iteration the policy mean is regressed toward
    the donor's on the rollout states whose rate is at most
    ``anchor_rate_max``: mild degradation barely changes the optimal gait,
    so the donor's behavior is pinned exactly where fault-episode gradients
    would otherwise erode it, while higher rates stay free to adapt.  The
    static reference anchor (and the bootstrap clone) only applies to
    from-scratch runs.
    """
    cfg = cfg if cfg is not None else PpoConfig()
    reward_cfg = reward_cfg if reward_cfg is not None else RewardConfig()
    root = np.random.SeedSequence(seed)
    (env_seq, init_seq, roll_seq, disc_seq, expert_seq, boot_seq,
     dom_seq) = root.spawn(7)

    env = VecEnv(cfg.n_envs, sim_cfg=sim_cfg, rand_cfg=rand_cfg,
                 seed=env_seq, backend=backend)
    n = cfg.n_envs
    policy = TeacherPolicy(joint, rng=np.random.default_rng(init_seq),
                           hidden=cfg.hidden, log_std_init=cfg.log_std_init)
    donor = None
    if warm_start is not None:
        policy.store.load_state_dict(warm_start)
        # exploration restarts at the configured level; the donor's fully
        # annealed std would leave nothing to discover the fault response
        policy.log_std[:] = cfg.log_std_init
        if cfg.anchor_coef > 0.0:
            donor = TeacherPolicy(joint, hidden=cfg.hidden)
            donor.store.load_state_dict(warm_start)
    optimizer = Adam(policy.store, lr=cfg.lr)

    expert = build_expert_features(cfg.expert_transitions, seed=expert_seq, cfg=env.cfg)
    stats = AmpStats.from_features(expert)
    expert = stats.normalize(expert)
    disc = Discriminator(np.random.default_rng(disc_seq))
    disc_opt = Adam(disc.store, lr=cfg.disc_lr)

    rng = np.random.default_rng(roll_seq)
    sched = ScheduleParams(p=cfg.schedule_p, delta=cfg.schedule_delta)
    max_steps = env.cfg.max_episode_steps()
    rows = np.arange(n)

    anchor_set = None
    if cfg.bootstrap_steps > 0:
        boot_rng = np.random.default_rng(boot_seq)
        if warm_start is None:
            anchor_set = _bootstrap(policy, optimizer, env, boot_rng, cfg)
        elif donor is not None:
            anchor_set = _donor_anchor_set(donor, env, boot_rng, cfg)
        if anchor_set is not None and len(anchor_set[0]) == 0:
            anchor_set = None

    level = cfg.level_start
    dom_level = cfg.level_start if cfg.domain_curriculum else 1.0
    dom_rng = np.random.default_rng(dom_seq)

    def sample_domains(k):
        # None lets the env draw from its full ranges (the default regime)
        if not cfg.domain_curriculum:
            return None
        scaled = scaled_randomization(env.rand, dom_level)
        return [randomize_domain(dom_rng, scaled) for _ in range(k)]

    env.reset_envs(rows, level=level, domains=sample_domains(n))
    obs = env.observations()
    active_joint = np.array([joint_sampler(rng) for _ in range(n)], dtype=np.int64)
    d = min(dom_level, cfg.max_rate) * rng.random(n)

    T = cfg.n_steps
    curves = []
    for it in range(cfg.iterations):
        snapshot = policy.store.state_dict()
        buf_x = np.empty((T, n, POLICY_INPUT), dtype=np.float32)
        buf_a = np.empty((T, n, N_JOINTS), dtype=np.float32)
        buf_logp = np.empty((T, n))
        buf_v = np.empty((T + 1, n))
        buf_r = np.empty((T, n))
        buf_done = np.empty((T, n), dtype=bool)
        feats = np.empty((T, n, AMP_DIM))
        term_sums = dict.fromkeys(TERM_NAMES, 0.0)
        task_sum = style_sum = 0.0
        falls = 0

        for t in range(T):
            x = policy.inputs(obs, d)
            mean = policy.pi.forward(x)
            std = np.exp(policy.log_std)
            actions = (mean + std * rng.standard_normal((n, N_JOINTS))).astype(np.float32)
            logp = gaussian_logp(actions, mean, policy.log_std)
            values = policy.values(x)

            env.degradation[:] = 0.0
            env.degradation[rows, active_joint] = d
            sb = env.step(actions)
            feats[t] = transition_features(
                obs[:, 12:24], obs[:, 24:36], obs[:, 0:3], obs[:, 3:6],
                sb.obs[:, 12:24], sb.obs[:, 24:36], sb.obs[:, 0:3], sb.obs[:, 3:6])
            task_tot, terms = task_reward_batch(sb, env.command, reward_cfg)
            style = style_reward(disc.forward(stats.normalize(feats[t])))
            reward = task_tot + reward_cfg.style_weight * style

            timeout = env.episode_step >= max_steps
            done = sb.fall | timeout
            d = np.minimum(schedule_step_batch(d, rng, sched),
                           min(dom_level, cfg.max_rate))
            truncated = timeout & ~sb.fall
            if truncated.any():
                # timeout is not failure: bootstrap with the post-step value
                v_next = policy.values(policy.inputs(sb.obs, d))
                reward = reward + cfg.gamma * v_next * truncated

            buf_x[t] = x
            buf_a[t] = actions
            buf_logp[t] = logp
            buf_v[t] = values
            buf_r[t] = reward
            buf_done[t] = done

            for name in TERM_NAMES:
                term_sums[name] += float(terms[name].sum())
            task_sum += float(task_tot.sum())
            style_sum += float(style.sum())
            falls += int(sb.fall.sum())

            obs = sb.obs
            done_idx = np.flatnonzero(done)
            if done_idx.size:
                env.reset_envs(done_idx, level=level,
                               domains=sample_domains(done_idx.size))
                obs[done_idx] = env.observations()[done_idx]
                for i in done_idx:
                    active_joint[i] = joint_sampler(rng)
                d[done_idx] = min(dom_level, cfg.max_rate) * rng.random(done_idx.size)

        buf_v[T] = policy.values(policy.inputs(obs, d))
        adv = gae(buf_r, buf_v, buf_done, cfg.gamma, cfg.lam)
        batch = {
            "inputs": buf_x.reshape(T * n, POLICY_INPUT),
            "actions": buf_a.reshape(T * n, N_JOINTS),
            "logp": buf_logp.reshape(-1),
            "advantages": adv.reshape(-1),
            "returns": (adv + buf_v[:T]).reshape(-1),
            "values": buf_v[:T].reshape(-1),
        }

        pol_feats = stats.normalize(feats.reshape(T * n, AMP_DIM))
        disc_loss = disc_gp = 0.0
        for _ in range(cfg.disc_updates):
            e_idx = rng.integers(0, len(expert), cfg.disc_batch)
            p_idx = rng.integers(0, len(pol_feats), cfg.disc_batch)
            disc.store.zero_grads()
            dloss, parts = discriminator_loss_and_grad(
                expert[e_idx], pol_feats[p_idx], disc, reward_cfg.alpha_gp)
            disc_opt.step()
            disc_loss += dloss / cfg.disc_updates
            disc_gp += parts["grad_penalty"] / cfg.disc_updates

        anchor = None
        if cfg.anchor_coef > 0.0:
            if cfg.anchor_iters > 0:
                coef = cfg.anchor_coef * max(0.0, 1.0 - it / cfg.anchor_iters)
            else:
                coef = cfg.anchor_coef
            if coef > 0.0:
                if donor is not None:
                    # static orbit states plus this iteration's low-rate
                    # visited states, all labelled by the frozen donor
                    xs_parts, aa_parts = [], []
                    if anchor_set is not None:
                        xs_parts.append(anchor_set[0])
                        aa_parts.append(anchor_set[1])
                    low = batch["inputs"][:, -1] <= cfg.anchor_rate_max
                    if low.any():
                        ax = batch["inputs"][low]
                        xs_parts.append(ax)
                        aa_parts.append(donor.pi.forward(ax))
                    if xs_parts:
                        anchor = (np.concatenate(xs_parts),
                                  np.concatenate(aa_parts), coef)
                elif anchor_set is not None:
                    anchor = (anchor_set[0], anchor_set[1], coef)
        try:
            report = ppo_update(policy, optimizer, batch, cfg, rng,
                                freeze_policy=it < cfg.value_warmup,
                                anchor=anchor)
        except TrainingDiverged as err:
            err.state = snapshot
            raise

        per_step = T * n
        row = {"iteration": it}
        for name in TERM_NAMES:
            row[name] = term_sums[name] / per_step
        row.update(task=task_sum / per_step, style=style_sum / per_step,
                   reward=(task_sum + reward_cfg.style_weight * style_sum) / per_step,
                   level=level, dom_level=dom_level, **report,
                   disc_loss=disc_loss, disc_grad_penalty=disc_gp, falls=falls)
        curves.append(row)
        if progress is not None:
            progress(row)

        if row["lin_vel_track"] > cfg.curriculum_threshold:
            level = min(1.0, level + cfg.curriculum_step)
        if cfg.domain_curriculum and dom_level < level:
            # physics and fault ranges widen only while the gait keeps its
            # feet, so difficulty never outruns what the policy survives
            if (row["lin_vel_track"] > cfg.curriculum_threshold
                    and falls <= cfg.fall_budget * per_step):
                dom_level = min(level, dom_level + cfg.curriculum_step)
        if (cfg.stop_tracking > 0.0 and len(curves) >= 5
                and level >= 1.0 and dom_level >= 1.0):
            # only at full difficulty; a lucky streak on easy commands
            # must not end the run early
            if min(c["lin_vel_track"] for c in curves[-5:]) >= cfg.stop_tracking:
                break

    return policy, stats, curves


def train_teacher(joint, cfg=None, reward_cfg=None, seed=0, **kwargs):
    """Train the teacher for one joint (index or name)."""
    j = joint_index(joint)
    return train_policy(lambda rng: j, j, cfg=cfg, reward_cfg=reward_cfg,
                        seed=seed, **kwargs)


def evaluate_tracking(policy, n_episodes=8, seed=0, sim_cfg=None, rand_cfg=None,
                      backend=None):
    """Mean velocity-tracking term over undegraded full-length episodes.

    Runs ``n_episodes`` environments in lockstep with deterministic actions
    at degradation zero and level-1.0 commands.  The average is taken over
    the full horizon: an environment that falls contributes zero for its
    remaining steps, so the score rewards staying up, not just tracking
    briefly.  Returns a float in [0, 1].
    """
    env = VecEnv(n_episodes, sim_cfg=sim_cfg, rand_cfg=rand_cfg,
                 seed=np.random.SeedSequence(entropy=seed, spawn_key=(7,)),
                 backend=backend)
    env.reset_envs(np.arange(n_episodes), level=1.0)
    obs = env.observations()
    d0 = np.zeros(n_episodes)
    max_steps = env.cfg.max_episode_steps()
    total = 0.0
    for _ in range(max_steps):
        alive = env.active != 0
        if not alive.any():
            break
        sb = env.step(policy.act_batch(obs, d0))
        _, terms = task_reward_batch(sb, env.command)
        total += float(terms["lin_vel_track"][alive].sum())
        env.active[sb.fall] = 0
        obs = sb.obs
    return total / (n_episodes * max_steps)


def save_teacher(path, policy, stats=None):
    """Checkpoint = parameter store + feature stats + joint stamp."""
    arrays = policy.store.state_dict()
    stamp = -1.0 if policy.joint is None else float(policy.joint)
    arrays["joint"] = np.array([stamp], dtype=np.float32)
    if stats is not None:
        arrays.update(stats.to_arrays())
    save_checkpoint(path, arrays)


def load_teacher(path):
    """Rebuild (policy, stats) from a checkpoint; stats is None if absent."""
    arrays = load_checkpoint(path)
    stamp = int(arrays.pop("joint")[0])
    joint = None if stamp < 0 else stamp
    stats = None
    if "amp_mean" in arrays:
        stats = AmpStats.from_arrays(arrays)
        arrays.pop("amp_mean")
        arrays.pop("amp_std")
    widths = []
    i = 0
    while f"pi.l{i}.W" in arrays:
        widths.append(arrays[f"pi.l{i}.W"].shape[1])
        i += 1
    policy = TeacherPolicy(joint, hidden=tuple(widths[:-1]))
    policy.store.load_state_dict(arrays)
    return policy, stats


def write_curves(path, curves):
    """Training curves as CSV, one row per iteration, stable field order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_FIELDS)
        for row in curves:
            writer.writerow(_format(row[k]) for k in CURVE_FIELDS)


def read_curves(path):
    """Inverse of write_curves: list of dicts with float values."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [{k: float(v) for k, v in row.items()} for row in reader]


def _format(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".10g")
