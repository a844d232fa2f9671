"""Teacher-to-student distillation: dataset, transformer student, inference.

The dataset has one shard per single-fault scenario: shard i holds N
trajectories of T records (s, d, a) collected by driving teacher i's
deterministic mean through the environment while joint i's rate follows
the adaptive schedule.  The student is a causal transformer over the
interleaved token stream s_1, d_1, a_1, s_2, ... with sinusoidal positions
local to the window; the action for timestep t is read at the d_t token,
so it conditions on s_<=t, d_<=t and a_<t only.

Windows shorter than the context occur once per episode (the first T_c
steps) and occupy positions 0..len-1; training pads them at the tail,
which the causal mask keeps invisible, so online inference from the ring
buffer sees exactly the layout it was trained on.
"""

import hashlib
import json
import os
import struct
from collections import deque
from dataclasses import dataclass

import numpy as np

from .degradation import ScheduleParams, schedule_step_batch
from .joints import N_JOINTS
from .nn import (Adam, Dense, ParameterStore, TransformerStack, clip_grad_norm,
                 load_checkpoint, positional_encoding, save_checkpoint)
from .obs import scale_obs
from .sim.env import OBS_DIM, VecEnv
from .teacher import TrainingDiverged

S_DIM = OBS_DIM
D_DIM = N_JOINTS
A_DIM = N_JOINTS
REC_DIM = S_DIM + D_DIM + A_DIM

_MAGIC = b"ADTJ"
_VERSION = 1

LOSS_FIELDS = ("update", "loss")


class TrajectoryStore:
    """12 shards of (n_traj, horizon, 72) float32 records, plus metadata."""

    def __init__(self, shards, meta):
        shards = [np.asarray(s, dtype=np.float32) for s in shards]
        if len(shards) != N_JOINTS:
            raise ValueError(f"need {N_JOINTS} shards, got {len(shards)}")
        shape = shards[0].shape
        if len(shape) != 3 or shape[2] != REC_DIM:
            raise ValueError(f"shard records must be (n, t, {REC_DIM}), got {shape}")
        if any(s.shape != shape for s in shards):
            raise ValueError("shards must share one (n_traj, horizon) shape")
        self.shards = shards
        self.meta = dict(meta)

    @property
    def n_traj(self):
        return self.shards[0].shape[0]

    @property
    def horizon(self):
        return self.shards[0].shape[1]

    def states(self, i):
        return self.shards[i][:, :, :S_DIM]

    def rates(self, i):
        return self.shards[i][:, :, S_DIM:S_DIM + D_DIM]

    def actions(self, i):
        return self.shards[i][:, :, S_DIM + D_DIM:]

    def save(self, dirpath):
        os.makedirs(dirpath, exist_ok=True)
        header = _MAGIC + struct.pack(
            "<6I", _VERSION, self.n_traj, self.horizon, S_DIM, D_DIM, A_DIM)
        for i, shard in enumerate(self.shards):
            with open(os.path.join(dirpath, f"shard_{i:02d}.bin"), "wb") as fh:
                fh.write(header)
                fh.write(np.ascontiguousarray(shard, dtype="<f4").tobytes())
        with open(os.path.join(dirpath, "metadata.json"), "w") as fh:
            json.dump(self.meta, fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, dirpath):
        with open(os.path.join(dirpath, "metadata.json")) as fh:
            meta = json.load(fh)
        shards = []
        for i in range(N_JOINTS):
            with open(os.path.join(dirpath, f"shard_{i:02d}.bin"), "rb") as fh:
                blob = fh.read()
            if blob[:4] != _MAGIC:
                raise ValueError(f"shard {i}: bad magic {blob[:4]!r}")
            version, n, t, sd, dd, ad = struct.unpack_from("<6I", blob, 4)
            if version != _VERSION:
                raise ValueError(f"shard {i}: unsupported version {version}")
            if (sd, dd, ad) != (S_DIM, D_DIM, A_DIM):
                raise ValueError(f"shard {i}: dims {(sd, dd, ad)} do not match")
            data = np.frombuffer(blob, dtype="<f4", offset=28)
            shards.append(data.reshape(n, t, REC_DIM).copy())
        return cls(shards, meta)


def _collection_hash(meta):
    """Stable digest of everything that determines the records."""
    text = json.dumps({k: meta[k] for k in sorted(meta) if k != "config_hash"},
                      sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def collect_dataset(teachers, n_traj, horizon, schedule=None, seed=0,
                    sim_cfg=None, rand_cfg=None, backend=None, n_envs=64,
                    progress=None):
    """Roll the 12 teachers into a TrajectoryStore.

    Shard i: ``n_traj`` trajectories of ``horizon`` records, joint i's rate
    starting uniform and stepped by the adaptive schedule, environments at
    full command level with domain randomization.  The stored action is the
    teacher's deterministic mean.  A robot that falls freezes in place for
    the rest of its trajectory (the env's native termination) while the
    rate keeps evolving, so records stay finite and the shard keeps its
    rectangular shape.
    """
    if len(teachers) != N_JOINTS:
        raise ValueError(f"need {N_JOINTS} teachers, got {len(teachers)}")
    for i, pol in enumerate(teachers):
        if pol.joint is not None and pol.joint != i:
            raise ValueError(f"teacher at position {i} is stamped for joint {pol.joint}")
    if n_traj < 1 or horizon < 1:
        raise ValueError("n_traj and horizon must be >= 1")
    schedule = schedule if schedule is not None else ScheduleParams()

    root = np.random.SeedSequence(seed)
    shard_seqs = root.spawn(N_JOINTS)
    shards = []
    for i in range(N_JOINTS):
        env_seq, d_seq = shard_seqs[i].spawn(2)
        n = min(n_envs, n_traj)
        env = VecEnv(n, sim_cfg=sim_cfg, rand_cfg=rand_cfg, seed=env_seq,
                     backend=backend)
        d_rng = np.random.default_rng(d_seq)
        data = np.empty((n_traj, horizon, REC_DIM), dtype=np.float32)
        done = 0
        while done < n_traj:
            count = min(n, n_traj - done)
            env.reset_envs(np.arange(n), level=1.0)
            obs = env.observations()
            d_active = d_rng.random(n)
            dvec = np.zeros((n, N_JOINTS))
            buf = np.empty((horizon, n, REC_DIM), dtype=np.float32)
            for t in range(horizon):
                dvec[:, i] = d_active
                act = teachers[i].act_batch(obs, d_active)
                buf[t, :, :S_DIM] = obs
                buf[t, :, S_DIM:S_DIM + D_DIM] = dvec
                buf[t, :, S_DIM + D_DIM:] = act
                env.degradation[:] = 0.0
                env.degradation[:, i] = d_active
                sb = env.step(act)
                env.active[sb.fall] = 0
                obs = sb.obs
                d_active = schedule_step_batch(d_active, d_rng, schedule)
            data[done:done + count] = buf[:, :count].transpose(1, 0, 2)
            done += count
            if progress is not None:
                progress(i, done)
        shards.append(data)

    meta = {"n_traj": int(n_traj), "horizon": int(horizon), "seed": int(seed),
            "p": schedule.p, "delta": schedule.delta,
            "s_dim": S_DIM, "d_dim": D_DIM, "a_dim": A_DIM}
    meta["config_hash"] = _collection_hash(meta)
    return TrajectoryStore(shards, meta)


@dataclass(frozen=True)
class StudentConfig:
    t_context: int = 20
    d_model: int = 128
    n_heads: int = 4
    n_blocks: int = 6
    dropout: float = 0.1

    def __post_init__(self):
        if self.t_context < 1:
            raise ValueError("t_context must be >= 1")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must divide evenly into heads")


class StudentModel:
    """Causal transformer over (s, d, a) token triples, one action per step."""

    def __init__(self, cfg=None, rng=None, dtype=np.float32):
        self.cfg = cfg if cfg is not None else StudentConfig()
        if rng is None:
            rng = np.random.default_rng(0)
        D = self.cfg.d_model
        self.store = ParameterStore(dtype=dtype)
        self.embed_s = Dense(self.store, "embed_s", S_DIM, D, rng)
        self.embed_d = Dense(self.store, "embed_d", D_DIM, D, rng)
        self.embed_a = Dense(self.store, "embed_a", A_DIM, D, rng)
        self.trunk = TransformerStack(self.store, "trunk", D, self.cfg.n_heads,
                                      self.cfg.n_blocks, rng, self.cfg.dropout)
        self.head = Dense(self.store, "head", D, A_DIM, rng)

    def forward_window(self, s, d, a, rng=None, train=False):
        """Predicted actions (B, W, 12) for a batch of aligned windows.

        Window contents sit at positions 0..W-1; rows shorter than W are
        padded at the tail and the caller masks their loss — the causal
        mask already keeps padding out of every valid prediction.
        """
        B, W, _ = s.shape
        if W < 1 or W > self.cfg.t_context:
            raise ValueError(f"window length {W} outside 1..{self.cfg.t_context}")
        dtype = self.store.dtype
        pos = positional_encoding(np.arange(W), self.cfg.d_model).astype(dtype)
        xs = self.embed_s.forward(scale_obs(s).astype(dtype)) + pos
        xd = self.embed_d.forward(np.asarray(d, dtype=dtype)) + pos
        xa = self.embed_a.forward(np.asarray(a, dtype=dtype)) + pos
        tokens = np.empty((B, 3 * W, self.cfg.d_model), dtype=dtype)
        tokens[:, 0::3] = xs
        tokens[:, 1::3] = xd
        tokens[:, 2::3] = xa
        h = self.trunk.forward(tokens, rng=rng, train=train)
        # readout at the d_t token: sees s/d up to t and actions before t
        return self.head.forward(h[:, 1::3])

    def backward(self, dpred):
        B, W, _ = dpred.shape
        dh = np.zeros((B, 3 * W, self.cfg.d_model), dtype=self.store.dtype)
        dh[:, 1::3] = self.head.backward(dpred)
        dtok = self.trunk.backward(dh)
        self.embed_s.backward(dtok[:, 0::3])
        self.embed_d.backward(dtok[:, 1::3])
        self.embed_a.backward(dtok[:, 2::3])


class HistoryBuffer:
    """Ring of the last t_context (s, d, a) triples for online inference."""

    def __init__(self, t_context):
        if t_context < 1:
            raise ValueError("t_context must be >= 1")
        self.t_context = int(t_context)
        self._ring = deque(maxlen=self.t_context)

    def __len__(self):
        return len(self._ring)

    def append(self, s, d, a):
        self._ring.append((np.array(s, dtype=np.float32),
                           np.array(d, dtype=np.float32),
                           np.array(a, dtype=np.float32)))

    def tail(self, k):
        """The most recent k triples, oldest first."""
        items = list(self._ring)
        return items[len(items) - min(k, len(items)):]

    def clear(self):
        self._ring.clear()


def student_act(model, buffer, s_t, d_t):
    """One control step: predict at the current (s, d), then commit it.

    The window is the last <= t_context-1 buffered triples plus the current
    timestep with a zero action placeholder; the placeholder sits after the
    d_t readout, so its value never reaches the prediction.
    """
    s_t = np.asarray(s_t, dtype=np.float64)
    d_t = np.asarray(d_t, dtype=np.float64)
    if s_t.shape != (S_DIM,) or d_t.shape != (D_DIM,):
        raise ValueError(f"expected shapes ({S_DIM},) and ({D_DIM},), "
                         f"got {s_t.shape} and {d_t.shape}")
    past = buffer.tail(model.cfg.t_context - 1)
    L = len(past) + 1
    # windows are built in the model dtype, as during training
    dtype = model.store.dtype
    s = np.zeros((1, L, S_DIM), dtype)
    d = np.zeros((1, L, D_DIM), dtype)
    a = np.zeros((1, L, A_DIM), dtype)
    for j, (ps, pd, pa) in enumerate(past):
        s[0, j], d[0, j], a[0, j] = ps, pd, pa
    s[0, L - 1] = s_t
    d[0, L - 1] = d_t
    action = model.forward_window(s, d, a)[0, L - 1].astype(np.float64)
    buffer.append(s_t, d_t, action)
    return action


def bc_loss(predictions, targets):
    """Sum over timesteps of squared Euclidean prediction error."""
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape:
        raise ValueError(f"shape mismatch {predictions.shape} vs {targets.shape}")
    diff = predictions - targets
    return float((diff * diff).sum())


@dataclass(frozen=True)
class BcConfig:
    lr: float = 3e-4
    batch: int = 64
    updates: int = 20000
    grad_clip: float = 1.0

    def __post_init__(self):
        if self.batch < 1 or self.updates < 0:
            raise ValueError("batch must be >= 1 and updates >= 0")


def train_student(store, model_cfg=None, bc_cfg=None, seed=0, progress=None):
    """Behavior-clone the student on uniformly sampled windows.

    Samples (shard, trajectory, window start) uniformly; starts before the
    trajectory head produce the short cold-start windows online inference
    also sees.  The logged loss is the masked per-element MSE of the batch.
    Returns (model, curve).
    """
    if store.n_traj < 1:
        raise ValueError("trajectory store is empty")
    bc = bc_cfg if bc_cfg is not None else BcConfig()
    root = np.random.SeedSequence(seed)
    init_seq, batch_seq, drop_seq = root.spawn(3)
    model = StudentModel(model_cfg, rng=np.random.default_rng(init_seq))
    optimizer = Adam(model.store, lr=bc.lr)
    rng = np.random.default_rng(batch_seq)
    drop_rng = np.random.default_rng(drop_seq)

    W = model.cfg.t_context
    T = store.horizon
    B = bc.batch
    curve = []
    for u in range(bc.updates):
        sh = rng.integers(0, N_JOINTS, B)
        traj = rng.integers(0, store.n_traj, B)
        start = rng.integers(1 - W, max(0, T - W) + 1, B)
        window = np.zeros((B, W, REC_DIM), dtype=np.float32)
        mask = np.zeros((B, W), dtype=np.float64)
        for b in range(B):
            lo = max(0, start[b])
            hi = min(start[b] + W, T)
            window[b, :hi - lo] = store.shards[sh[b]][traj[b], lo:hi]
            mask[b, :hi - lo] = 1.0
        s = window[:, :, :S_DIM]
        d = window[:, :, S_DIM:S_DIM + D_DIM]
        a = window[:, :, S_DIM + D_DIM:]

        preds = model.forward_window(s, d, a, rng=drop_rng, train=True)
        diff = (preds - a) * mask[:, :, None]
        denom = mask.sum() * A_DIM
        loss = float((diff * diff).sum() / denom)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"BC loss became non-finite at update {u}")
        model.store.zero_grads()
        model.backward(((2.0 / denom) * diff).astype(np.float32))
        clip_grad_norm(model.store, bc.grad_clip)
        optimizer.step()
        row = {"update": u, "loss": loss}
        curve.append(row)
        if progress is not None:
            progress(row)
    return model, curve


def save_student(path, model):
    """Checkpoint = parameter store + architecture stamp."""
    arrays = model.store.state_dict()
    arrays["arch"] = np.array([model.cfg.t_context, model.cfg.d_model,
                               model.cfg.n_heads, model.cfg.n_blocks],
                              dtype=np.float32)
    arrays["dropout"] = np.array([model.cfg.dropout], dtype=np.float32)
    save_checkpoint(path, arrays)


def load_student(path):
    arrays = load_checkpoint(path)
    arch = arrays.pop("arch").astype(int)
    # stored as float32; round away the cast noise (rates are human-entered)
    dropout = round(float(arrays.pop("dropout")[0]), 6)
    cfg = StudentConfig(t_context=int(arch[0]), d_model=int(arch[1]),
                        n_heads=int(arch[2]), n_blocks=int(arch[3]),
                        dropout=dropout)
    model = StudentModel(cfg)
    model.store.load_state_dict(arrays)
    return model


def write_loss_curve(path, curve):
    """BC loss curve as CSV, stable field order."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(LOSS_FIELDS) + "\n")
        for row in curve:
            fh.write(f"{int(row['update'])},{format(row['loss'], '.10g')}\n")


def read_loss_curve(path):
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            vals = line.strip().split(",")
            rows.append({k: float(v) for k, v in zip(header, vals)})
    return rows
