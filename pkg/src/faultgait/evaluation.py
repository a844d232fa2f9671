"""Evaluation protocols: fault grids, dense sweeps, gait and gravity
analysis, multi-joint scenarios.

Episodes run in lockstep batches against the vectorized surrogate: every
policy is wrapped in a small batch controller (reset/act) so teachers, the
transformer student, the MLP regressor and the zero-action floor all drive
the same loop.  A fallen environment is frozen and its log truncated at
the fall; evaluation reward is the task stack only, so scores measure
locomotion rather than imitation of the style prior.

Artifacts are plain CSVs, each with a JSON sidecar, and their layouts are
stable: the plotting package parses them without importing this one.
"""

import csv
import json
import math
import os
from collections import deque
from dataclasses import dataclass

import numpy as np

from .baselines import MlpStudent
from .degradation import all_joints_fault, multi_fault, scenario_degradation, \
    single_fault
from .distill import A_DIM, D_DIM, S_DIM, StudentModel
from .joints import JOINT_NAMES, LEG_NAMES, N_JOINTS, joint_index
from .rewards import TERM_NAMES, task_reward_batch
from .sim.config import Command
from .sim.env import VecEnv
from .teacher import TeacherPolicy

# Fig.-3 rate set; deliberately denser near the failure end
GRID_RATES = (0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.95, 1.0)

DEFAULT_ONSET = (200, 500)


@dataclass
class EpisodeLog:
    """Per-step record of one evaluation episode, truncated at the fall.

    Arrays share the leading dimension (the step index, from 0); forces
    are per-foot L2 norms in LEG_NAMES order, breakdown columns follow
    TERM_NAMES, and rates is the degradation vector the controller saw.
    """

    scenario: object
    seed: object
    rewards: np.ndarray      # (L,)
    breakdown: np.ndarray    # (L, len(TERM_NAMES))
    v_body: np.ndarray       # (L, 3)
    g_xy: np.ndarray         # (L, 2)
    foot_forces: np.ndarray  # (L, 4)
    contacts: np.ndarray     # (L, 4) bool
    rates: np.ndarray        # (L, 12)
    fell: bool

    @property
    def steps(self):
        return len(self.rewards)


@dataclass
class EvalGrid:
    """Joints x rates aggregate of episode reward and survival."""

    rates: tuple
    reward_mean: np.ndarray
    reward_std: np.ndarray
    survival_mean: np.ndarray
    episodes: int


def survival_time(log):
    """Steps survived: the log length (fall ends a log, the cap ends it)."""
    return log.steps


# -- controllers ---------------------------------------------------------------

class TeacherController:
    """Scalar-rate policies read the active fault off the rate vector."""

    def __init__(self, policy):
        self.policy = policy

    def reset(self, n):
        pass

    def act(self, obs, d):
        return self.policy.act_batch(obs, np.max(d, axis=1))


class StudentController:
    """Batched counterpart of student_act: same window layout in lockstep."""

    def __init__(self, model):
        self.model = model

    def reset(self, n):
        self.hist = deque(maxlen=self.model.cfg.t_context - 1)

    def act(self, obs, d):
        n = len(obs)
        dtype = self.model.store.dtype
        L = len(self.hist) + 1
        s = np.zeros((n, L, S_DIM), dtype)
        dd = np.zeros((n, L, D_DIM), dtype)
        aa = np.zeros((n, L, A_DIM), dtype)
        for j, (hs, hd, ha) in enumerate(self.hist):
            s[:, j], dd[:, j], aa[:, j] = hs, hd, ha
        s[:, L - 1] = obs
        dd[:, L - 1] = d
        action = self.model.forward_window(s, dd, aa)[:, L - 1] \
            .astype(np.float64)
        self.hist.append((np.asarray(obs, np.float32).copy(),
                          np.asarray(d, np.float32).copy(),
                          action.astype(np.float32)))
        return action


class MlpController:
    """Feeds the regressor its own previous action."""

    def __init__(self, model):
        self.model = model

    def reset(self, n):
        self.prev = np.zeros((n, A_DIM))

    def act(self, obs, d):
        x = self.model.inputs(obs, d, self.prev)
        action = self.model.forward(x).astype(np.float64)
        self.prev = action
        return action


class ZeroController:
    """Holds the nominal pose; the sanity floor every policy must beat."""

    def reset(self, n):
        pass

    def act(self, obs, d):
        return np.zeros((len(obs), A_DIM))


def make_controller(model):
    """Wrap a policy in the batch controller protocol (idempotent)."""
    if callable(getattr(model, "act", None)) and callable(getattr(model, "reset", None)):
        return model
    if isinstance(model, TeacherPolicy):
        return TeacherController(model)
    if isinstance(model, StudentModel):
        return StudentController(model)
    if isinstance(model, MlpStudent):
        return MlpController(model)
    raise TypeError(f"no controller for {type(model).__name__}")


# -- episode execution ---------------------------------------------------------

def _run_batch(controller, scenarios, seeds, cap, env_seq, cmd_rng,
               sim_cfg=None, rand_cfg=None, backend=None, command=None):
    """Run len(scenarios) episodes in lockstep; one EpisodeLog each."""
    n = len(scenarios)
    env = VecEnv(n, sim_cfg=sim_cfg, rand_cfg=rand_cfg, seed=env_seq,
                 backend=backend)
    commands = [command] * n if command is not None else \
        [Command(vx=float(cmd_rng.uniform(0.2, 1.0))) for _ in range(n)]
    env.reset_envs(np.arange(n), commands=commands)
    controller.reset(n)

    onsets = np.array([sc.onset_step for sc in scenarios])
    rate_rows = np.stack([scenario_degradation(sc, sc.onset_step)
                          for sc in scenarios])

    k = len(TERM_NAMES)
    rewards = np.zeros((n, cap))
    breakdown = np.zeros((n, cap, k))
    v_body = np.zeros((n, cap, 3))
    g_xy = np.zeros((n, cap, 2))
    forces = np.zeros((n, cap, 4))
    contacts = np.zeros((n, cap, 4), dtype=bool)
    rates = np.zeros((n, cap, N_JOINTS))
    steps = np.zeros(n, dtype=np.int64)
    fell = np.zeros(n, dtype=bool)

    alive = np.ones(n, dtype=bool)
    obs = env.observations()
    for t in range(cap):
        d = rate_rows * (t >= onsets)[:, None]
        env.degradation[:] = d
        sb = env.step(controller.act(obs, d))
        total, terms = task_reward_batch(sb, env.command)
        rewards[alive, t] = total[alive]
        breakdown[alive, t] = np.stack([terms[key] for key in TERM_NAMES],
                                       axis=1)[alive]
        v_body[alive, t] = sb.v_body[alive]
        g_xy[alive, t] = sb.g_body[alive, :2]
        forces[alive, t] = np.linalg.norm(sb.foot_forces, axis=2)[alive]
        contacts[alive, t] = sb.contacts[alive]
        rates[alive, t] = d[alive]
        steps[alive] += 1
        down = alive & sb.fall      # divergence folds into the fall flag
        fell |= down
        env.active[down] = 0
        alive &= ~down
        if not alive.any():
            break
        obs = sb.obs

    logs = []
    for i in range(n):
        m = steps[i]
        logs.append(EpisodeLog(
            scenario=scenarios[i], seed=seeds[i],
            rewards=rewards[i, :m].copy(), breakdown=breakdown[i, :m].copy(),
            v_body=v_body[i, :m].copy(), g_xy=g_xy[i, :m].copy(),
            foot_forces=forces[i, :m].copy(), contacts=contacts[i, :m].copy(),
            rates=rates[i, :m].copy(), fell=bool(fell[i])))
    return logs


def run_episode(policy, scenario, seed=0, cap=1000, sim_cfg=None,
                rand_cfg=None, backend=None):
    """One randomized episode under a fault scenario; returns its log.

    Domain and command (vx ~ U(0.2, 1.0), straight-line) are drawn fresh
    from the seed; the scenario's onset is taken as given, so identical
    (policy, scenario, seed) replays identically.
    """
    root = np.random.SeedSequence(entropy=seed, spawn_key=(11,))
    env_seq, cmd_seq = root.spawn(2)
    controller = make_controller(policy)
    return _run_batch(controller, [scenario], [int(seed)], cap, env_seq,
                      np.random.default_rng(cmd_seq), sim_cfg=sim_cfg,
                      rand_cfg=rand_cfg, backend=backend)[0]


def _sample_onsets(onset, rng, n):
    if isinstance(onset, (int, np.integer)):
        return np.full(n, int(onset))
    lo, hi = onset
    return rng.integers(int(lo), int(hi), n)


def _episode_batch(controller, make_scenario, episodes, onset, cell_seq, cap,
                   sim_cfg, rand_cfg, backend, command=None):
    env_seq, cmd_seq, onset_seq = cell_seq.spawn(3)
    onsets = _sample_onsets(onset, np.random.default_rng(onset_seq), episodes)
    scenarios = [make_scenario(int(o)) for o in onsets]
    return _run_batch(controller, scenarios, list(range(episodes)), cap,
                      env_seq, np.random.default_rng(cmd_seq), sim_cfg=sim_cfg,
                      rand_cfg=rand_cfg, backend=backend, command=command)


def _summary(logs):
    totals = np.array([log.rewards.sum() for log in logs])
    surv = np.array([survival_time(log) for log in logs], dtype=np.float64)
    return {"reward_mean": float(totals.mean()),
            "reward_std": float(totals.std()),
            "survival_mean": float(surv.mean())}


def eval_grid(policy, rates=GRID_RATES, episodes=64, seed=0, cap=1000,
              onset=DEFAULT_ONSET, sim_cfg=None, rand_cfg=None, backend=None,
              progress=None, return_logs=False):
    """Single-joint fault grid: 12 joints x rates, aggregated per cell.

    ``policy`` is any wrappable model, or a list of 12 teachers evaluated
    each on its own joint's row.  With ``return_logs`` the per-episode
    logs come back too, as {(joint, rate): [EpisodeLog, ...]}.
    """
    rates = tuple(float(r) for r in rates)
    if not rates or any(not 0.0 <= r <= 1.0 for r in rates):
        raise ValueError("rates must lie in [0, 1]")
    if episodes < 1:
        raise ValueError("need at least one episode per cell")
    bank = None
    if isinstance(policy, (list, tuple)):
        if len(policy) != N_JOINTS:
            raise ValueError(f"teacher bank needs {N_JOINTS} policies")
        bank = [make_controller(p) for p in policy]

    root = np.random.SeedSequence(entropy=seed, spawn_key=(13,))
    shape = (N_JOINTS, len(rates))
    rmean = np.zeros(shape)
    rstd = np.zeros(shape)
    smean = np.zeros(shape)
    all_logs = {}
    for j in range(N_JOINTS):
        controller = bank[j] if bank is not None else make_controller(policy)
        for ki, rate in enumerate(rates):
            logs = _episode_batch(
                controller, lambda o: single_fault(j, rate, o), episodes,
                onset, root.spawn(1)[0], cap, sim_cfg, rand_cfg, backend)
            cell = _summary(logs)
            rmean[j, ki] = cell["reward_mean"]
            rstd[j, ki] = cell["reward_std"]
            smean[j, ki] = cell["survival_mean"]
            if return_logs:
                all_logs[(j, rate)] = logs
            if progress is not None:
                progress({"joint": JOINT_NAMES[j], "rate": rate, **cell})
    grid = EvalGrid(rates=rates, reward_mean=rmean, reward_std=rstd,
                    survival_mean=smean, episodes=int(episodes))
    return (grid, all_logs) if return_logs else grid


def dense_sweep(policy, joint, step=0.05, episodes=16, seed=0, cap=1000,
                onset=DEFAULT_ONSET, sim_cfg=None, rand_cfg=None, backend=None,
                progress=None):
    """Reward vs rate for one joint on a dense grid of floor(1/step)+1 rates."""
    if not 0.0 < step <= 1.0:
        raise ValueError("rate step must be in (0, 1]")
    j = joint_index(joint)
    count = int(math.floor(1.0 / step + 1e-9)) + 1
    rates = [min(1.0, round(i * step, 10)) for i in range(count)]
    root = np.random.SeedSequence(entropy=seed, spawn_key=(17,))
    controller = make_controller(policy)
    rows = []
    for rate in rates:
        logs = _episode_batch(
            controller, lambda o: single_fault(j, rate, o), episodes, onset,
            root.spawn(1)[0], cap, sim_cfg, rand_cfg, backend)
        rows.append({"rate": rate, **_summary(logs)})
        if progress is not None:
            progress(rows[-1])
    return rows


def multi_joint_eval(policy, arity, rates=None, episodes=8, seed=0, cap=1000,
                     onset=DEFAULT_ONSET, draws=512, sim_cfg=None,
                     rand_cfg=None, backend=None, progress=None):
    """Simultaneous-fault tables: all pairs, sampled triples, or all joints.

    arity 2 covers all 66 pairs at each rate (default high rates); arity 3
    samples ``draws`` random triples; arity "all" sweeps a uniform rate on
    every joint at once (default rates cover the mild-fault regime).
    """
    controller = make_controller(policy)
    root = np.random.SeedSequence(entropy=seed, spawn_key=(19,))
    rows = []

    def cell(make_scenario, names, rate):
        logs = _episode_batch(controller, make_scenario, episodes, onset,
                              root.spawn(1)[0], cap, sim_cfg, rand_cfg,
                              backend)
        row = dict(names)
        row.update(rate=rate, episodes=int(episodes), **_summary(logs))
        rows.append(row)
        if progress is not None:
            progress(row)

    if arity == 2:
        rates = tuple(rates) if rates is not None else (0.9, 1.0)
        for a in range(N_JOINTS):
            for b in range(a + 1, N_JOINTS):
                for r in rates:
                    cell(lambda o: multi_fault(((a, r), (b, r)), o),
                         {"joint_a": JOINT_NAMES[a], "joint_b": JOINT_NAMES[b]},
                         r)
    elif arity == 3:
        rates = tuple(rates) if rates is not None else (0.9, 1.0)
        pick = np.random.default_rng(root.spawn(1)[0])
        for _ in range(draws):
            triple = np.sort(pick.choice(N_JOINTS, 3, replace=False))
            for r in rates:
                cell(lambda o: multi_fault(tuple((int(j), r) for j in triple), o),
                     {"joint_a": JOINT_NAMES[triple[0]],
                      "joint_b": JOINT_NAMES[triple[1]],
                      "joint_c": JOINT_NAMES[triple[2]]},
                     r)
    elif arity == "all":
        rates = tuple(rates) if rates is not None else \
            (0.0, 0.1, 0.2, 0.25, 0.3, 0.4, 0.5)
        for r in rates:
            cell(lambda o: all_joints_fault(r, o), {}, r)
    else:
        raise ValueError(f"arity must be 2, 3 or 'all', got {arity!r}")
    return rows


# -- gait and gravity analysis -------------------------------------------------

def eval_scenario(policy, scenario, episodes=32, seed=0, cap=1000,
                  command=None, sim_cfg=None, rand_cfg=None, backend=None):
    """Batch of randomized episodes under one fixed scenario.

    The onset comes from the scenario itself; domains vary per episode as
    in the grid, and commands do too unless ``command`` pins one for all
    episodes.  Returns the per-episode logs.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    root = np.random.SeedSequence(entropy=seed, spawn_key=(23,))
    controller = make_controller(policy)
    return _episode_batch(controller, lambda onset: scenario, episodes,
                          scenario.onset_step, root, cap, sim_cfg, rand_cfg,
                          backend, command=command)


def gait_stats(logs, onset, window=100):
    """Per-episode loading and posture summary around a fault onset.

    For each log: mean foot-force norm per leg and mean lateral gravity
    projection over up to ``window`` steps before and after ``onset``,
    clipped to the steps actually survived.  A side of the onset the
    episode never reached reports NaN.
    """
    rows = []
    for i, log in enumerate(logs):
        n = log.steps
        row = {"episode": i, "steps": n, "fell": int(log.fell)}
        for tag, span in (("pre", slice(max(0, onset - window),
                                        min(onset, n))),
                          ("post", slice(min(onset, n),
                                         min(onset + window, n)))):
            if span.start >= span.stop:
                vals = [float("nan")] * 6
            else:
                vals = [*log.foot_forces[span].mean(axis=0),
                        *log.g_xy[span].mean(axis=0)]
            for name, v in zip([f"force_{leg}" for leg in LEG_NAMES]
                               + ["g_x", "g_y"], vals):
                row[f"{tag}_{name}"] = float(v)
        rows.append(row)
    return rows


def scenario_label(scenario):
    """Compact filename-safe descriptor, e.g. FRC1_on200 or all0.25_on0."""
    joints = scenario.affected_joints
    if not joints:
        body = "none"
    elif (len(joints) == N_JOINTS
          and len({r for _, r in joints}) == 1):
        body = f"all{joints[0][1]:g}"
    else:
        body = "+".join(f"{JOINT_NAMES[j]}{r:g}" for j, r in joints)
    return f"{body}_on{scenario.onset_step}"


def gravity_projection_series(logs):
    """Per-step body-frame gravity x/y rows, grouped by scenario label."""
    if not logs:
        raise ValueError("no episode logs given")
    rows = []
    for e, log in enumerate(logs):
        label = scenario_label(log.scenario)
        for t in range(log.steps):
            rows.append({"scenario": label, "episode": e, "step": t,
                         "g_x": float(log.g_xy[t, 0]),
                         "g_y": float(log.g_xy[t, 1])})
    return rows


def contact_gait_report(log):
    """Stance intervals and per-foot force norms for one episode.

    Returns {"intervals": {leg: [(start, end), ...]}, "steps": rows} with
    half-open [start, end) stance runs per leg in LEG_NAMES order.
    """
    if log.steps == 0:
        raise ValueError("empty episode log")
    intervals = {}
    for leg, name in enumerate(LEG_NAMES):
        padded = np.concatenate([[False], log.contacts[:, leg], [False]])
        edge = np.diff(padded.astype(np.int8))
        starts = np.flatnonzero(edge == 1)
        ends = np.flatnonzero(edge == -1)
        intervals[name] = list(zip(starts.tolist(), ends.tolist()))
    steps = []
    for t in range(log.steps):
        row = {"step": t}
        for leg, name in enumerate(LEG_NAMES):
            row[f"contact_{name}"] = int(log.contacts[t, leg])
        for leg, name in enumerate(LEG_NAMES):
            row[f"force_{name}"] = float(log.foot_forces[t, leg])
        steps.append(row)
    return {"intervals": intervals, "steps": steps}


# -- CSV artifacts -------------------------------------------------------------

def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".10g")


def _write_sidecar(csv_path, info):
    path = os.path.splitext(csv_path)[0] + ".json"
    with open(path, "w") as fh:
        json.dump(info, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_rows(path, fields, rows, info):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow(_fmt(row[f]) for f in fields)
    _write_sidecar(path, info)
    return path


def write_grid(dirpath, grid, info=None):
    """grid_{mean,std,surv}.csv: joint rows in Unitree order, rate columns."""
    os.makedirs(dirpath, exist_ok=True)
    info = {**(info or {}), "episodes": grid.episodes,
            "rates": list(grid.rates)}
    header = ["joint"] + [format(r, "g") for r in grid.rates]
    tables = (("grid_mean.csv", grid.reward_mean),
              ("grid_std.csv", grid.reward_std),
              ("grid_surv.csv", grid.survival_mean))
    paths = []
    for name, table in tables:
        path = os.path.join(dirpath, name)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for j, jname in enumerate(JOINT_NAMES):
                writer.writerow([jname] + [_fmt(v) for v in table[j]])
        _write_sidecar(path, info)
        paths.append(path)
    return paths


def write_sweep(path, rows, info=None):
    """Dense-sweep curve: one row per rate."""
    fields = ("rate", "reward_mean", "reward_std", "survival_mean")
    return _write_rows(path, fields, rows, info or {})


def write_gravity(path, rows, info=None):
    """Gravity projection scatter rows from gravity_projection_series."""
    fields = ("scenario", "episode", "step", "g_x", "g_y")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([row["scenario"], row["episode"], row["step"],
                             _fmt(row["g_x"]), _fmt(row["g_y"])])
    _write_sidecar(path, info or {})
    return path


def write_gait(path, report, info=None):
    """Per-step contact booleans and force norms from contact_gait_report."""
    fields = ["step"] + [f"contact_{n}" for n in LEG_NAMES] \
        + [f"force_{n}" for n in LEG_NAMES]
    return _write_rows(path, fields, report["steps"], info or {})


def write_gaitstats(path, rows, info=None):
    """Pre/post-onset per-episode summaries from gait_stats."""
    fields = ("episode", "steps", "fell") \
        + tuple(f"{tag}_force_{leg}" for tag in ("pre", "post")
                for leg in LEG_NAMES) \
        + ("pre_g_x", "pre_g_y", "post_g_x", "post_g_y")
    return _write_rows(path, fields, rows, info or {})


def write_multi(path, rows, info=None):
    """Multi-joint fault table; joint columns depend on the arity."""
    if not rows:
        raise ValueError("no rows to write")
    joint_cols = [c for c in ("joint_a", "joint_b", "joint_c") if c in rows[0]]
    fields = joint_cols + ["rate", "reward_mean", "reward_std",
                           "survival_mean", "episodes"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([row[c] for c in joint_cols]
                            + [_fmt(row[f]) for f in fields[len(joint_cols):]])
    _write_sidecar(path, info or {})
    return path
