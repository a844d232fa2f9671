"""Ablation baselines: one policy over all faults, and a memoryless student.

The Single Policy reuses the teacher architecture and training loop but
draws the degraded joint uniformly at every episode start, so a single
network has to cover all twelve scenarios.  The MLP student consumes the
same distillation dataset as the transformer but sees only the current
observation, rate vector and previous action — no history — isolating the
contribution of temporal context.
"""

import numpy as np

from .distill import A_DIM, BcConfig, D_DIM, S_DIM, bc_loss
from .joints import N_JOINTS
from .nn import Adam, Mlp, ParameterStore, clip_grad_norm, load_checkpoint, \
    save_checkpoint
from .obs import scale_obs
from .teacher import TrainingDiverged, train_policy

MLP_INPUT = S_DIM + D_DIM + A_DIM


def train_single_policy(cfg=None, reward_cfg=None, seed=0, **kwargs):
    """Train one policy across all single-joint scenarios.

    Identical to train_teacher except the active joint is resampled
    uniformly per episode; the returned policy carries no joint stamp.
    Returns (policy, stats, curves).
    """
    return train_policy(lambda rng: int(rng.integers(N_JOINTS)), None,
                        cfg=cfg, reward_cfg=reward_cfg, seed=seed, **kwargs)


class MlpStudent:
    """Feed-forward clone acting from a single step of context.

    Input is the scaled observation, the full rate vector and the previous
    action (zero at the first step), matching the information in one
    student token; hidden widths follow the teacher trunk by default.
    """

    def __init__(self, hidden=(512, 256, 128), rng=None, dtype=np.float32):
        if rng is None:
            rng = np.random.default_rng(0)
        self.hidden = tuple(int(h) for h in hidden)
        self.store = ParameterStore(dtype=dtype)
        sizes = (MLP_INPUT,) + self.hidden + (A_DIM,)
        self.net = Mlp(self.store, "net", sizes, rng, activation="elu")

    def inputs(self, s, d, a_prev):
        s = np.atleast_2d(np.asarray(s, dtype=np.float64))
        d = np.atleast_2d(np.asarray(d, dtype=np.float64))
        a_prev = np.atleast_2d(np.asarray(a_prev, dtype=np.float64))
        x = np.concatenate([scale_obs(s), d, a_prev], axis=1)
        return x.astype(self.store.dtype)

    def forward(self, x):
        return self.net.forward(x)

    def backward(self, dpred):
        return self.net.backward(dpred)


def mlp_act(model, s_t, d_t, a_prev):
    """One deterministic control step; the caller carries ``a_prev``."""
    s_t = np.asarray(s_t, dtype=np.float64)
    d_t = np.asarray(d_t, dtype=np.float64)
    a_prev = np.asarray(a_prev, dtype=np.float64)
    if s_t.shape != (S_DIM,) or d_t.shape != (D_DIM,) or a_prev.shape != (A_DIM,):
        raise ValueError("expected one step of (s, d, prev action)")
    x = model.inputs(s_t[None], d_t[None], a_prev[None])
    return model.forward(x)[0].astype(np.float64)


def train_mlp_student(store, hidden=(512, 256, 128), bc_cfg=None, seed=0,
                      progress=None):
    """Behavior-clone the MLP on uniformly sampled single transitions.

    Same optimizer, update count and batch size as the transformer run;
    each sample supervises one timestep rather than a whole window, with
    the previous action taken from the preceding record (zero at the
    trajectory head).  Returns (model, curve).
    """
    if store.n_traj < 1:
        raise ValueError("trajectory store is empty")
    bc = bc_cfg if bc_cfg is not None else BcConfig()
    root = np.random.SeedSequence(seed)
    init_seq, batch_seq = root.spawn(2)
    model = MlpStudent(hidden, rng=np.random.default_rng(init_seq))
    optimizer = Adam(model.store, lr=bc.lr)
    rng = np.random.default_rng(batch_seq)

    T = store.horizon
    B = bc.batch
    curve = []
    for u in range(bc.updates):
        sh = rng.integers(0, N_JOINTS, B)
        traj = rng.integers(0, store.n_traj, B)
        t = rng.integers(0, T, B)
        s = np.empty((B, S_DIM), dtype=np.float32)
        d = np.empty((B, D_DIM), dtype=np.float32)
        a_prev = np.zeros((B, A_DIM), dtype=np.float32)
        target = np.empty((B, A_DIM), dtype=np.float32)
        for b in range(B):
            rec = store.shards[sh[b]][traj[b], t[b]]
            s[b] = rec[:S_DIM]
            d[b] = rec[S_DIM:S_DIM + D_DIM]
            target[b] = rec[S_DIM + D_DIM:]
            if t[b] > 0:
                a_prev[b] = store.shards[sh[b]][traj[b], t[b] - 1,
                                                S_DIM + D_DIM:]
        preds = model.forward(model.inputs(s, d, a_prev))
        loss = bc_loss(preds, target) / (B * A_DIM)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"BC loss became non-finite at update {u}")
        model.store.zero_grads()
        model.backward(((2.0 / (B * A_DIM)) * (preds - target))
                       .astype(np.float32))
        clip_grad_norm(model.store, bc.grad_clip)
        optimizer.step()
        row = {"update": u, "loss": loss}
        curve.append(row)
        if progress is not None:
            progress(row)
    return model, curve


def save_mlp_student(path, model):
    """Checkpoint = parameter store + hidden-width stamp."""
    arrays = model.store.state_dict()
    arrays["hidden"] = np.array(model.hidden, dtype=np.float32)
    save_checkpoint(path, arrays)


def load_mlp_student(path):
    arrays = load_checkpoint(path)
    hidden = tuple(int(h) for h in arrays.pop("hidden"))
    model = MlpStudent(hidden)
    model.store.load_state_dict(arrays)
    return model
