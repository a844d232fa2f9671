"""Task reward stack and the adversarial style objective.

task_reward scores one control step from quantities the env already
reports. Each term is a scaled contribution collected into a breakdown
dict; the total is the fold of the breakdown in TERM_NAMES order, so the
terms sum to the total exactly, not just approximately.

The style side is a least-squares GAN over 60-dim transition features
[q, qd, v, w] of two consecutive states. The discriminator is a small tanh
MLP with a gradient penalty on the expert batch; the policy collects
max(0, 1 - 0.25 (D - 1)^2) as its style bonus. The penalty differentiates
the discriminator's own input gradient, so discriminator_loss_and_grad
writes that second-order backward out by hand (tanh keeps it closed-form);
the tests pin it against central differences.
"""

from dataclasses import dataclass

import numpy as np

from .nn import ParameterStore
from .sim.config import SimConfig, sample_command
from .sim.gait import expert_state_sequence
from .sim.kinematics import euler_to_matrix

# breakdown key order; also the column order of training-log CSVs
TERM_NAMES = (
    "lin_vel_track",
    "ang_vel_track",
    "unexpected_ang_vel",
    "orientation",
    "torques",
    "accelerations",
    "feet_air_time",
    "collisions",
    "action_change",
    "large_action",
)


@dataclass(frozen=True)
class RewardConfig:
    """Per-term scales (negative = penalty) plus the style-objective knobs.

    The action penalties measure actions in radians of joint target, so
    action_scale here mirrors SimConfig.action_scale.
    """

    lin_vel_track: float = 1.0
    ang_vel_track: float = 0.5
    unexpected_ang_vel: float = -0.05
    orientation: float = -2.0
    torques: float = -1e-4
    accelerations: float = -2.5e-7
    feet_air_time: float = 1.0
    collisions: float = -0.5
    action_change: float = -0.01
    large_action: float = -0.3
    style_weight: float = 0.5    # total reward = task + style_weight * style
    alpha_gp: float = 10.0       # discriminator gradient-penalty coefficient
    action_scale: float = 0.25


def _term_values(cfg, commands, v_body, w_body, g_body, torque_sq, qd, qd_prev,
                 air_reward, collisions, action, prev_action):
    """Scaled per-term arrays (n,), batched over the leading axis."""
    vel_err = np.sum((commands[:, :2] - v_body[:, :2]) ** 2, axis=1)
    yaw_err = (commands[:, 2] - w_body[:, 2]) ** 2
    d_rad = (prev_action - action) * cfg.action_scale
    a_rad = action * cfg.action_scale
    return {
        # tracking kernels saturate at 1 and decay as exp(-err^2 / 0.25)
        "lin_vel_track": cfg.lin_vel_track * np.exp(-vel_err / 0.25),
        "ang_vel_track": cfg.ang_vel_track * np.exp(-yaw_err / 0.25),
        "unexpected_ang_vel": cfg.unexpected_ang_vel * (w_body[:, 0] ** 2 + w_body[:, 1] ** 2),
        "orientation": cfg.orientation * (g_body[:, 0] ** 2 + g_body[:, 1] ** 2),
        "torques": cfg.torques * torque_sq,
        "accelerations": cfg.accelerations * np.sum((qd_prev - qd) ** 2, axis=1),
        "feet_air_time": cfg.feet_air_time * air_reward,
        "collisions": cfg.collisions * collisions,
        "action_change": cfg.action_change * np.sum(d_rad ** 2, axis=1),
        "large_action": cfg.large_action * np.sum(a_rad ** 2, axis=1),
    }


def task_reward_batch(batch, commands, cfg=None):
    """Task reward over a StepBatch; returns (totals (n,), breakdown dict)."""
    cfg = cfg or RewardConfig()
    commands = np.asarray(commands, dtype=np.float64)
    terms = _term_values(
        cfg, commands, batch.v_body, batch.w_body, batch.g_body,
        batch.torque_sq, batch.qd, batch.qd_prev, batch.air_reward,
        batch.collisions, batch.action, batch.prev_action,
    )
    total = np.zeros(commands.shape[0])
    for name in TERM_NAMES:
        total = total + terms[name]
    return total, terms


def task_reward(info, command, action=None, prev_action=None, cfg=None):
    """Task reward for a single StepInfo; returns (total, breakdown).

    action and prev_action default to the ones recorded on the step. The
    total is the exact fold of the breakdown values in TERM_NAMES order.
    """
    cfg = cfg or RewardConfig()
    action = info.action if action is None else np.asarray(action, dtype=np.float64)
    prev_action = info.prev_action if prev_action is None else np.asarray(prev_action, dtype=np.float64)
    command = command.as_array() if hasattr(command, "as_array") else np.asarray(command, dtype=np.float64)
    terms = _term_values(
        cfg, command[None, :],
        np.asarray(info.v_body)[None, :],
        np.asarray(info.w_body)[None, :],
        np.asarray(info.g_body)[None, :],
        np.array([info.torque_sq]),
        np.asarray(info.qd)[None, :],
        np.asarray(info.qd_prev)[None, :],
        np.array([info.air_reward]),
        np.array([float(info.collisions)]),
        np.asarray(action)[None, :],
        np.asarray(prev_action)[None, :],
    )
    breakdown = {name: float(terms[name][0]) for name in TERM_NAMES}
    total = 0.0
    for name in TERM_NAMES:
        total += breakdown[name]
    return total, breakdown


# -- transition features ------------------------------------------------------

AMP_DIM = 60


def transition_features(q0, qd0, v0, w0, q1, qd1, v1, w1):
    """Raw feature vector(s) [q qd v w] of both states, stacked to 60 dims.

    Velocities are body-frame. Accepts single states or batches (leading
    axis shared by all arguments).
    """
    return np.concatenate([q0, qd0, v0, w0, q1, qd1, v1, w1], axis=-1)


def amp_features(state, next_state, stats=None):
    """Features for two consecutive RobotStates, normalized if stats given.

    RobotState carries world-frame base velocity; the feature space is
    body-frame, so the rotation is applied here.
    """
    def half(s):
        R = euler_to_matrix(s.base_rpy)
        return s.q, s.qd, R.T @ s.base_lin_vel, s.base_ang_vel

    feats = transition_features(*half(state), *half(next_state))
    return feats if stats is None else stats.normalize(feats)


@dataclass(frozen=True)
class AmpStats:
    """Frozen per-channel feature normalization (computed once, then fixed)."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def from_features(cls, feats):
        feats = np.asarray(feats, dtype=np.float64)
        # constant channels (lateral velocity on the expert set) get a floor
        # so they normalize to zero instead of dividing by zero
        return cls(mean=feats.mean(axis=0), std=np.maximum(feats.std(axis=0), 0.01))

    def normalize(self, feats):
        return (np.asarray(feats, dtype=np.float64) - self.mean) / self.std

    def to_arrays(self):
        return {"amp_mean": self.mean.copy(), "amp_std": self.std.copy()}

    @classmethod
    def from_arrays(cls, arrays):
        return cls(mean=np.asarray(arrays["amp_mean"], dtype=np.float64),
                   std=np.asarray(arrays["amp_std"], dtype=np.float64))


def build_expert_features(n_transitions=100_000, seed=0, cfg=None, chunk=50):
    """Expert feature set: kinematic reference-gait transitions.

    Draws a fresh command and phase every `chunk` transitions so the set
    covers the command range rather than one cycle of one gait.
    """
    cfg = cfg or SimConfig()
    rng = np.random.default_rng(seed)
    out = np.empty((n_transitions, AMP_DIM))
    done = 0
    while done < n_transitions:
        n = min(chunk, n_transitions - done)
        command = sample_command(rng, 1.0)
        q, qd, v, w = expert_state_sequence(command, n + 1, cfg=cfg, phase0=rng.random())
        out[done:done + n] = transition_features(
            q[:-1], qd[:-1], v[:-1], w[:-1], q[1:], qd[1:], v[1:], w[1:]
        )
        done += n
    return out


# -- discriminator ------------------------------------------------------------


class Discriminator:
    """Tanh MLP scoring transition features with a linear scalar output.

    Parameters live in a ParameterStore (W0, b0, ... per layer) so the
    usual optimizer and checkpoint plumbing apply. The forward pass is
    written out here rather than built from nn layers because the gradient
    penalty needs the explicit activation chain twice (see
    discriminator_loss_and_grad).
    """

    def __init__(self, rng=None, n_in=AMP_DIM, hidden=(256, 128), dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.sizes = (int(n_in),) + tuple(int(h) for h in hidden) + (1,)
        self.store = ParameterStore(dtype=dtype)
        for i in range(len(self.sizes) - 1):
            bound = np.sqrt(1.0 / self.sizes[i])
            self.store.add(f"W{i}", rng.uniform(-bound, bound, (self.sizes[i], self.sizes[i + 1])))
            self.store.add(f"b{i}", np.zeros(self.sizes[i + 1]))

    @property
    def n_layers(self):
        return len(self.sizes) - 1

    def _weight(self, i):
        return self.store.params[f"W{i}"]

    def _forward(self, x):
        """Scores (n,) plus the cached activation chain [x, h_1, ..., h_L]."""
        hs = [np.asarray(x, dtype=self.store.dtype)]
        for i in range(self.n_layers - 1):
            hs.append(np.tanh(hs[-1] @ self._weight(i) + self.store.params[f"b{i}"]))
        top = self.n_layers - 1
        y = hs[-1] @ self._weight(top) + self.store.params[f"b{top}"]
        return y[:, 0], hs

    def forward(self, x):
        """Scores (n,) for a feature batch (n, AMP_DIM)."""
        return self._forward(np.atleast_2d(x))[0]

    def input_gradient(self, x):
        """Per-row gradient of the score w.r.t. the input features, (n, AMP_DIM)."""
        x = np.atleast_2d(x)
        _, hs = self._forward(x)
        top = self.n_layers - 1
        a = np.broadcast_to(self._weight(top)[:, 0], (x.shape[0], self.sizes[top]))
        for i in range(top - 1, -1, -1):
            a = ((1.0 - hs[i + 1] ** 2) * a) @ self._weight(i).T
        return np.array(a)


def style_reward(d_out):
    """Imitation bonus from a discriminator score; range [0, 1], peak at 1."""
    out = np.maximum(0.0, 1.0 - 0.25 * (np.asarray(d_out, dtype=np.float64) - 1.0) ** 2)
    return out if out.ndim else float(out)


def _check_batches(expert, policy, n_in):
    expert = np.atleast_2d(np.asarray(expert))
    policy = np.atleast_2d(np.asarray(policy))
    for name, batch in (("expert", expert), ("policy", policy)):
        if batch.shape[0] == 0 or batch.shape[1] != n_in:
            raise ValueError(f"{name} batch must be non-empty with {n_in} features, got {batch.shape}")
    return expert, policy


def discriminator_loss(expert, policy, disc, alpha_gp):
    """Least-squares objective with an expert-side gradient penalty.

    mean (D(expert) - 1)^2 + mean (D(policy) + 1)^2
    + (alpha_gp / 2) mean |d D / d input|^2 over the expert batch.
    Value only; no gradients.
    """
    expert, policy = _check_batches(expert, policy, disc.sizes[0])
    loss = float(np.mean((disc.forward(expert) - 1.0) ** 2))
    loss += float(np.mean((disc.forward(policy) + 1.0) ** 2))
    if alpha_gp != 0.0:
        g = disc.input_gradient(expert).astype(np.float64)
        loss += 0.5 * alpha_gp * float(np.mean(np.sum(g ** 2, axis=1)))
    return loss


def _ls_backward(disc, hs, dy, extra=None):
    """Backward of sum(dy * score) through a cached forward.

    extra maps activation level -> additional upstream gradient on that
    activation; the gradient-penalty pass produces those terms.
    """
    grads = disc.store.grads
    top = disc.n_layers - 1
    grads[f"W{top}"] += hs[top].T @ dy[:, None]
    grads[f"b{top}"] += dy.sum()
    hbar = dy[:, None] * disc._weight(top)[:, 0]
    if extra is not None and top in extra:
        hbar = hbar + extra[top]
    for i in range(top - 1, -1, -1):
        zbar = hbar * (1.0 - hs[i + 1] ** 2)
        grads[f"W{i}"] += hs[i].T @ zbar
        grads[f"b{i}"] += zbar.sum(axis=0)
        if i > 0:
            hbar = zbar @ disc._weight(i).T
            if extra is not None and i in extra:
                hbar = hbar + extra[i]


def discriminator_loss_and_grad(expert, policy, disc, alpha_gp):
    """discriminator_loss value, accumulating parameter gradients.

    Gradients are added into disc.store.grads; callers zero the store
    first. Returns (loss, parts) with the raw expert, policy and penalty
    terms for logging.

    The penalty is a function of the input gradient, itself a backward
    pass, so its parameter gradient needs a second differentiation. With
    g the per-sample input gradient and seed 2 g / batch (times alpha/2),
    the adjoint runs forward through the backward chain: at each hidden
    layer the seed splits into a weight term, a continuation, and a
    direct term on the activation through the tanh' factor; the direct
    terms then ride the ordinary backward sweep. The tests check every
    parameter against central differences.
    """
    expert, policy = _check_batches(expert, policy, disc.sizes[0])
    grads = disc.store.grads
    top = disc.n_layers - 1

    y_p, hs_p = disc._forward(policy)
    ls_policy = float(np.mean((y_p + 1.0) ** 2))
    _ls_backward(disc, hs_p, (2.0 / len(y_p)) * (y_p + 1.0))

    y_e, hs = disc._forward(expert)
    ls_expert = float(np.mean((y_e - 1.0) ** 2))

    gp = 0.0
    extra = {}
    if alpha_gp != 0.0:
        n = len(y_e)
        # input-gradient chain, keeping per-level pieces for the second pass:
        # a[i] = d score / d activation level i, dz[i] its pre-activation twin
        a = {top: np.broadcast_to(disc._weight(top)[:, 0], (n, disc.sizes[top]))}
        dz = {}
        for i in range(top - 1, -1, -1):
            dz[i] = (1.0 - hs[i + 1] ** 2) * a[i + 1]
            a[i] = dz[i] @ disc._weight(i).T
        g = a[0]
        gp = float(np.mean(np.sum(g.astype(np.float64) ** 2, axis=1)))

        abar = (alpha_gp / n) * g
        for i in range(top):
            dzbar = abar @ disc._weight(i)
            grads[f"W{i}"] += abar.T @ dz[i]
            extra[i + 1] = dzbar * a[i + 1] * (-2.0 * hs[i + 1])
            abar = (1.0 - hs[i + 1] ** 2) * dzbar
        grads[f"W{top}"][:, 0] += abar.sum(axis=0)

    _ls_backward(disc, hs, (2.0 / len(y_e)) * (y_e - 1.0), extra)
    loss = ls_expert + ls_policy + 0.5 * alpha_gp * gp
    return loss, {"expert": ls_expert, "policy": ls_policy, "grad_penalty": gp}
