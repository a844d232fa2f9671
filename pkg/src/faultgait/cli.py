"""Command-line pipeline driver.

Subcommands cover the experiment flow end to end::

    train-teacher   fault-free donor plus per-joint fault teachers
    train-single    single-policy PPO baseline across all joints
    collect         roll the 12 teachers into the distillation dataset
    train-student   fit the transformer student on the dataset
    train-mlp       fit the reactive MLP clone on the same dataset
    eval-grid       joints x rates fault grid for any saved model
    eval-sweep      dense rate sweep for one joint
    eval-gait       episode batch under a fixed scenario from a JSON file
    eval-multi      simultaneous-fault tables (pairs, triples, all joints)
    selfcheck       fast install smoke checks
    bench           step-rate comparison of the kernel backends

All commands share ``--preset/--config/--seed/--out/--workers``.  Seeds
derive from the master seed at fixed per-command offsets, artifacts land
under the output directory, and every command merges a record of what it
did into ``<out>/manifest.json`` (preset, seed, config snapshot, code
version, artifact hashes) so a run can be replayed exactly.  Replays are
byte-identical: nothing here writes wall-clock state into an artifact.
"""

import argparse
import dataclasses
import hashlib
import json
import os
import subprocess
import sys
import time

import numpy as np

from . import __version__
from .baselines import load_mlp_student, save_mlp_student, \
    train_mlp_student, train_single_policy
from .degradation import FaultScenario, ScheduleParams, apply_degradation, \
    schedule_step
from .distill import TrajectoryStore, collect_dataset, load_student, \
    save_student, train_student, write_loss_curve
from .evaluation import ZeroController, contact_gait_report, dense_sweep, \
    eval_grid, eval_scenario, gait_stats, gravity_projection_series, \
    multi_joint_eval, run_episode, scenario_label, write_gait, \
    write_gaitstats, write_gravity, write_grid, write_multi, write_sweep
from .joints import JOINT_NAMES, N_JOINTS, joint_index
from .nn.checkpoint import load_checkpoint
from .presets import PRESETS, ConfigError, apply_overrides, get_preset
from .sim.backend import available_backends
from .sim.config import Command
from .sim.env import VecEnv
from .teacher import load_teacher, save_teacher, train_teacher, write_curves

# per-command offsets from the master seed; teacher/sweep add the joint index
_SEED = {"donor": 0, "teacher": 10, "single": 40, "collect": 50,
         "student": 60, "mlp": 70, "grid": 80, "sweep": 100, "gait": 120,
         "multi": 130}


# -- config and manifest --------------------------------------------------------

def _resolve(args):
    """PipelineConfig from preset, config file, and flag overrides."""
    overrides = {}
    if args.config is not None:
        try:
            with open(args.config) as fh:
                overrides = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: {exc}") from exc
        if not isinstance(overrides, dict):
            raise ConfigError("config file must hold a JSON object")
    preset = args.preset or overrides.get("preset", "desk")
    if not isinstance(preset, str):
        raise ConfigError("preset must be a string")
    cfg = apply_overrides(get_preset(preset), overrides)
    changes = {"preset": preset}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    return dataclasses.replace(cfg, **changes)


def _code_version():
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        done = subprocess.run(
            ["git", "-C", here, "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=10)
        if done.returncode == 0 and done.stdout.strip():
            return done.stdout.strip()
    except OSError:
        pass
    return f"v{__version__}"


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _hash_tree(paths, base):
    out = {}
    for p in paths:
        if os.path.isdir(p):
            for name in sorted(os.listdir(p)):
                fp = os.path.join(p, name)
                out[os.path.relpath(fp, base)] = _sha256(fp)
        else:
            out[os.path.relpath(p, base)] = _sha256(p)
    return out


def _record(cfg, command, outputs, inputs=()):
    """Merge this command's entry into <out>/manifest.json."""
    entry = {
        "preset": cfg.preset,
        "seed": cfg.seed,
        "version": _code_version(),
        "config": cfg.to_dict(),
        "inputs": _hash_tree(inputs, cfg.out),
        "artifacts": _hash_tree(outputs, cfg.out),
    }
    path = os.path.join(cfg.out, "manifest.json")
    data = {}
    if os.path.exists(path):
        with open(path) as fh:
            data = json.load(fh)
    data[command] = entry
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


# -- model loading ---------------------------------------------------------------

def _load_model(path):
    """Load any checkpoint kind; a directory loads the 12-teacher bank.

    Returns (model, kind) where kind is teacher, student, or mlp.
    """
    if os.path.isdir(path):
        bank = []
        for j in range(N_JOINTS):
            fp = os.path.join(path, f"teacher_{j:02d}.ckpt")
            if not os.path.exists(fp):
                raise ConfigError(f"{path}: missing teacher_{j:02d}.ckpt")
            bank.append(load_teacher(fp)[0])
        return bank, "teacher"
    if not os.path.exists(path):
        raise ConfigError(f"no such model: {path}")
    arrays = load_checkpoint(path)
    if "arch" in arrays:
        return load_student(path), "student"
    if "hidden" in arrays:
        return load_mlp_student(path), "mlp"
    if "joint" in arrays:
        return load_teacher(path)[0], "teacher"
    raise ConfigError(f"{path}: not a recognised model checkpoint")


def _eval_dir(cfg, model_path):
    """Artifacts for one model go under eval/<model stem>/."""
    stem = "teacher" if os.path.isdir(model_path) \
        else os.path.splitext(os.path.basename(model_path))[0]
    path = os.path.join(cfg.out, "eval", stem)
    os.makedirs(path, exist_ok=True)
    return path


def _eval_info(cfg, kind, seed):
    return {"model_kind": kind, "seed": seed, "preset": cfg.preset}


# -- training commands -----------------------------------------------------------

def _teacher_progress(row):
    if row["iteration"] % 50 == 0:
        print(f"  iter {row['iteration']:5d}  track {row['lin_vel_track']:.3f}"
              f"  reward {row['reward']:+.3f}  level {row['level']:.2f}"
              f"/{row['dom_level']:.2f}  falls {row['falls']:.0f}", flush=True)


def _train_donor(cfg):
    """Train (or reuse) the shared fault-free donor checkpoint."""
    path = os.path.join(cfg.out, "teachers", "donor.ckpt")
    if os.path.exists(path):
        return path, []
    print(f"donor: rate-zero teacher, seed {cfg.seed + _SEED['donor']}")
    policy, stats, curves = train_teacher(
        0, cfg=cfg.teacher.donor, reward_cfg=cfg.rewards,
        seed=cfg.seed + _SEED["donor"], sim_cfg=cfg.sim.physics,
        rand_cfg=cfg.sim.randomization, progress=_teacher_progress)
    save_teacher(path, policy, stats)
    curves_path = os.path.join(cfg.out, "teachers", "donor_curves.csv")
    write_curves(curves_path, curves)
    return path, [path, curves_path]


def cmd_train_teacher(args, cfg):
    os.makedirs(os.path.join(cfg.out, "teachers"), exist_ok=True)
    donor_path, outputs = _train_donor(cfg)
    donor = load_teacher(donor_path)[0]
    joints = range(N_JOINTS) if args.joint == "all" \
        else [_parse_joint(args.joint)]
    for j in joints:
        seed = cfg.seed + _SEED["teacher"] + j
        print(f"teacher {JOINT_NAMES[j]} ({j}): seed {seed}")
        policy, stats, curves = train_teacher(
            j, cfg=cfg.teacher.fault, reward_cfg=cfg.rewards, seed=seed,
            sim_cfg=cfg.sim.physics, rand_cfg=cfg.sim.randomization,
            progress=_teacher_progress,
            warm_start=donor.store.state_dict())
        path = os.path.join(cfg.out, "teachers", f"teacher_{j:02d}.ckpt")
        save_teacher(path, policy, stats)
        curves_path = os.path.join(
            cfg.out, "teachers", f"teacher_{j:02d}_curves.csv")
        write_curves(curves_path, curves)
        outputs += [path, curves_path]
    _record(cfg, "train-teacher", outputs, inputs=[donor_path])
    return 0


def cmd_train_single(args, cfg):
    os.makedirs(os.path.join(cfg.out, "teachers"), exist_ok=True)
    donor_path, outputs = _train_donor(cfg)
    donor = load_teacher(donor_path)[0]
    seed = cfg.seed + _SEED["single"]
    print(f"single policy: uniform joint per episode, seed {seed}")
    policy, stats, curves = train_single_policy(
        cfg=cfg.baselines.single, reward_cfg=cfg.rewards, seed=seed,
        sim_cfg=cfg.sim.physics, rand_cfg=cfg.sim.randomization,
        progress=_teacher_progress, warm_start=donor.store.state_dict())
    path = os.path.join(cfg.out, "single.ckpt")
    save_teacher(path, policy, stats)
    curves_path = os.path.join(cfg.out, "single_curves.csv")
    write_curves(curves_path, curves)
    _record(cfg, "train-single", outputs + [path, curves_path],
            inputs=[donor_path])
    return 0


def cmd_collect(args, cfg):
    bank_dir = os.path.join(cfg.out, "teachers")
    teachers, _ = _load_model(bank_dir)
    cc = cfg.distill.collect
    seed = cfg.seed + _SEED["collect"]
    print(f"collect: 12 x {cc.n_traj} trajectories of {cc.horizon}, "
          f"seed {seed}")
    store = collect_dataset(
        teachers, cc.n_traj, cc.horizon,
        schedule=ScheduleParams(p=cc.p, delta=cc.delta), seed=seed,
        sim_cfg=cfg.sim.physics, rand_cfg=cfg.sim.randomization,
        n_envs=cc.n_envs,
        progress=lambda i, done: print(
            f"  shard {i:2d} ({JOINT_NAMES[i]}): {done}/{cc.n_traj}",
            flush=True))
    dataset = os.path.join(cfg.out, "dataset")
    store.save(dataset)
    _record(cfg, "collect", [dataset], inputs=[bank_dir])
    return 0


def _bc_progress(row):
    if row["update"] % 500 == 0:
        print(f"  update {row['update']:6d}  loss {row['loss']:.5f}",
              flush=True)


def cmd_train_student(args, cfg):
    dataset = os.path.join(cfg.out, "dataset")
    store = TrajectoryStore.load(dataset)
    seed = cfg.seed + _SEED["student"]
    print(f"student: {cfg.distill.model}, seed {seed}")
    model, curve = train_student(store, model_cfg=cfg.distill.model,
                                 bc_cfg=cfg.distill.bc, seed=seed,
                                 progress=_bc_progress)
    path = os.path.join(cfg.out, "student.ckpt")
    save_student(path, model)
    curve_path = os.path.join(cfg.out, "student_loss.csv")
    write_loss_curve(curve_path, curve)
    _record(cfg, "train-student", [path, curve_path], inputs=[dataset])
    return 0


def cmd_train_mlp(args, cfg):
    dataset = os.path.join(cfg.out, "dataset")
    store = TrajectoryStore.load(dataset)
    seed = cfg.seed + _SEED["mlp"]
    print(f"mlp clone: hidden {cfg.baselines.mlp_hidden}, seed {seed}")
    model, curve = train_mlp_student(store, hidden=cfg.baselines.mlp_hidden,
                                     bc_cfg=cfg.baselines.mlp_bc, seed=seed,
                                     progress=_bc_progress)
    path = os.path.join(cfg.out, "mlp.ckpt")
    save_mlp_student(path, model)
    curve_path = os.path.join(cfg.out, "mlp_loss.csv")
    write_loss_curve(curve_path, curve)
    _record(cfg, "train-mlp", [path, curve_path], inputs=[dataset])
    return 0


# -- evaluation commands ---------------------------------------------------------

def cmd_eval_grid(args, cfg):
    model, kind = _load_model(args.model)
    seed = cfg.seed + _SEED["grid"]
    print(f"grid: {kind} over {len(cfg.eval.rates)} rates x {N_JOINTS} "
          f"joints, {cfg.eval.episodes} episodes/cell, seed {seed}")
    grid = eval_grid(model, rates=cfg.eval.rates, episodes=cfg.eval.episodes,
                     seed=seed, cap=cfg.eval.cap, onset=cfg.eval.onset,
                     sim_cfg=cfg.sim.physics, rand_cfg=cfg.sim.randomization,
                     progress=lambda cell: print(
                         f"  {cell['joint']} rate {cell['rate']:g}: "
                         f"reward {cell['reward_mean']:.1f} "
                         f"surv {cell['survival_mean']:.0f}", flush=True))
    outdir = _eval_dir(cfg, args.model)
    files = write_grid(outdir, grid, info=_eval_info(cfg, kind, seed))
    files += [f"{os.path.splitext(p)[0]}.json" for p in files]
    _record(cfg, f"eval-grid:{os.path.basename(outdir)}", files,
            inputs=[args.model])
    return 0


def cmd_eval_sweep(args, cfg):
    model, kind = _load_model(args.model)
    j = _parse_joint(args.joint)
    seed = cfg.seed + _SEED["sweep"] + j
    print(f"sweep: {kind}, joint {JOINT_NAMES[j]}, step "
          f"{cfg.eval.sweep_step:g}, seed {seed}")
    rows = dense_sweep(model, j, step=cfg.eval.sweep_step,
                       episodes=cfg.eval.sweep_episodes, seed=seed,
                       cap=cfg.eval.cap, onset=cfg.eval.onset,
                       sim_cfg=cfg.sim.physics,
                       rand_cfg=cfg.sim.randomization)
    outdir = _eval_dir(cfg, args.model)
    path = os.path.join(outdir, f"sweep_{JOINT_NAMES[j]}.csv")
    info = _eval_info(cfg, kind, seed)
    info["joint"] = JOINT_NAMES[j]
    write_sweep(path, rows, info=info)
    _record(cfg, f"eval-sweep:{os.path.basename(outdir)}:{JOINT_NAMES[j]}",
            [path, f"{os.path.splitext(path)[0]}.json"], inputs=[args.model])
    return 0


def cmd_eval_gait(args, cfg):
    model, kind = _load_model(args.model)
    try:
        with open(args.scenario) as fh:
            scenario = FaultScenario.from_json(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read scenario: {exc}") from exc
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{args.scenario}: bad scenario: {exc}") from exc
    seed = cfg.seed + _SEED["gait"]
    label = scenario_label(scenario)
    command = None if args.vx is None else Command(vx=args.vx)
    print(f"gait: {kind}, scenario {label}, {cfg.eval.gait_episodes} "
          f"episodes, seed {seed}")
    logs = eval_scenario(model, scenario, episodes=cfg.eval.gait_episodes,
                         seed=seed, cap=cfg.eval.cap, command=command,
                         sim_cfg=cfg.sim.physics,
                         rand_cfg=cfg.sim.randomization)
    outdir = _eval_dir(cfg, args.model)
    info = _eval_info(cfg, kind, seed)
    info["scenario"] = label
    if args.vx is not None:
        info["vx"] = args.vx
    paths = [os.path.join(outdir, f"{base}_{label}.csv")
             for base in ("gait", "gravity", "gaitstats")]
    write_gait(paths[0], contact_gait_report(logs[0]), info=info)
    write_gravity(paths[1], gravity_projection_series(logs), info=info)
    write_gaitstats(paths[2], gait_stats(logs, scenario.onset_step,
                                         window=cfg.eval.gait_window),
                    info=info)
    outputs = paths + [f"{os.path.splitext(p)[0]}.json" for p in paths]
    _record(cfg, f"eval-gait:{os.path.basename(outdir)}:{label}", outputs,
            inputs=[args.model])
    return 0


def cmd_eval_multi(args, cfg):
    model, kind = _load_model(args.model)
    arity = args.arity if args.arity == "all" else int(args.arity)
    seed = cfg.seed + _SEED["multi"] + {2: 0, 3: 1, "all": 2}[arity]
    print(f"multi: {kind}, arity {arity}, {cfg.eval.multi_episodes} "
          f"episodes/row, seed {seed}")
    rows = multi_joint_eval(model, arity, episodes=cfg.eval.multi_episodes,
                            seed=seed, cap=cfg.eval.cap,
                            onset=cfg.eval.onset, draws=cfg.eval.multi_draws,
                            sim_cfg=cfg.sim.physics,
                            rand_cfg=cfg.sim.randomization)
    outdir = _eval_dir(cfg, args.model)
    path = os.path.join(outdir, f"multi{arity}.csv")
    write_multi(path, rows, info=_eval_info(cfg, kind, seed))
    _record(cfg, f"eval-multi:{os.path.basename(outdir)}:{arity}",
            [path, f"{os.path.splitext(path)[0]}.json"], inputs=[args.model])
    return 0


# -- diagnostics -----------------------------------------------------------------

def _selfchecks():
    """(name, fn) pairs; each fn returns an error string or None."""
    from .rewards import task_reward_batch  # noqa: F401  (import check)

    def torque_attenuation():
        tau = np.array([30.0, -30.0, 10.0] * 4)
        d = np.array([0.0, 0.5, 1.0] * 4)
        got = apply_degradation(tau, d)
        want = np.array([30.0, -15.0, 0.0] * 4)
        if not np.allclose(got, want):
            return f"expected {want[:3]}, got {got[:3]}"

    def schedule_event_rate():
        params = ScheduleParams(p=0.02, delta=1e-4, active_joint=0)
        rng = np.random.default_rng(0)
        d, events = 0.3, 0
        for _ in range(20000):
            nd = schedule_step(d, rng, params)
            events += abs(nd - d) > 10 * params.delta
            d = nd
        freq = events / 20000
        if not 0.01 < freq < 0.03:
            return f"event frequency {freq:.4f} outside [0.01, 0.03]"

    def kernel_agreement():
        if "compiled" not in available_backends():
            return None  # numpy fallback only; nothing to compare
        outs = []
        for backend in available_backends():
            env = VecEnv(4, seed=7, backend=backend)
            rng = np.random.default_rng(3)
            for _ in range(40):
                sb = env.step(rng.uniform(-1, 1, (4, 12)))
            outs.append(sb.obs.tobytes())
        if outs[0] != outs[-1]:
            return "backends diverged after 40 steps"

    def episode_determinism():
        from .degradation import single_fault
        logs = [run_episode(ZeroController(), single_fault(2, 0.8, 10),
                            seed=5, cap=60) for _ in range(2)]
        if logs[0].rewards.tobytes() != logs[1].rewards.tobytes():
            return "identical seeds produced different episodes"

    def gradient_probe():
        from .nn.core import Mlp, ParameterStore
        rng = np.random.default_rng(1)
        store = ParameterStore(dtype=np.float64)
        net = Mlp(store, "n", (5, 8, 3), rng)
        x = rng.standard_normal((4, 5))
        out = net.forward(x)
        g = np.ones_like(out)
        net.backward(g)
        grads = store.grads.copy()
        eps, name = 1e-6, "n.l0.W"
        theta = store.params[name]
        num = np.zeros_like(theta)
        for idx in np.ndindex(*theta.shape):
            theta[idx] += eps
            up = net.forward(x).sum()
            theta[idx] -= 2 * eps
            down = net.forward(x).sum()
            theta[idx] += eps
            num[idx] = (up - down) / (2 * eps)
        rel = np.abs(num - grads[name]).max() / max(np.abs(num).max(), 1e-12)
        if rel > 1e-6:
            return f"finite-difference mismatch {rel:.2e}"

    return [("torque attenuation", torque_attenuation),
            ("schedule event rate", schedule_event_rate),
            ("kernel agreement", kernel_agreement),
            ("episode determinism", episode_determinism),
            ("gradient probe", gradient_probe)]


def cmd_selfcheck(args, cfg):
    failures = 0
    for name, fn in _selfchecks():
        err = fn()
        if err is None:
            print(f"ok    {name}")
        else:
            failures += 1
            print(f"FAIL  {name}: {err}")
    print(f"backends: {', '.join(available_backends())}")
    if failures:
        print(f"{failures} check(s) failed")
        return 1
    os.makedirs(cfg.out, exist_ok=True)
    _record(cfg, "selfcheck", [])
    return 0


def cmd_bench(args, cfg):
    n_envs, steps = 64, args.steps
    rng = np.random.default_rng(0)
    actions = rng.uniform(-1.0, 1.0, (steps, n_envs, 12))
    results = {}
    for backend in available_backends():
        env = VecEnv(n_envs, seed=1, backend=backend,
                     sim_cfg=cfg.sim.physics,
                     rand_cfg=cfg.sim.randomization)
        env.step(actions[0])  # warm the caches before timing
        t0 = time.perf_counter()
        for t in range(steps):
            env.step(actions[t])
        dt = time.perf_counter() - t0
        rate = n_envs * steps / dt
        results[backend] = rate
        print(f"{backend:>9}: {rate:10.0f} env-steps/s "
              f"({dt:.2f}s for {n_envs} x {steps})")
    if len(results) == 2:
        print(f"  speedup: {results['compiled'] / results['numpy']:.2f}x "
              f"compiled over numpy")
    return 0


# -- argument plumbing -----------------------------------------------------------

def _parse_joint(text):
    try:
        j = int(text)
    except ValueError:
        try:
            return joint_index(text)
        except (KeyError, ValueError):
            raise ConfigError(
                f"bad joint {text!r}: use 0-11 or one of "
                f"{', '.join(JOINT_NAMES)}") from None
    if not 0 <= j < N_JOINTS:
        raise ConfigError(f"joint index {j} out of range 0-{N_JOINTS - 1}")
    return j


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE",
                        help="JSON config overriding the preset")
    common.add_argument("--preset", choices=sorted(PRESETS),
                        help="base preset (default: desk)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="artifact directory")
    common.add_argument("--workers", type=int,
                        help="cap the process to N cores")

    parser = argparse.ArgumentParser(
        prog="faultgait",
        description="degradation-aware locomotion pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-teacher", parents=[common],
                       help="train the donor and per-joint fault teachers")
    p.add_argument("--joint", default="all",
                   help="joint index 0-11, joint name, or 'all'")
    p.set_defaults(fn=cmd_train_teacher)

    p = sub.add_parser("train-single", parents=[common],
                       help="train the single-policy baseline")
    p.set_defaults(fn=cmd_train_single)

    p = sub.add_parser("collect", parents=[common],
                       help="roll the teacher bank into the dataset")
    p.set_defaults(fn=cmd_collect)

    p = sub.add_parser("train-student", parents=[common],
                       help="behavior-clone the transformer student")
    p.set_defaults(fn=cmd_train_student)

    p = sub.add_parser("train-mlp", parents=[common],
                       help="behavior-clone the MLP baseline")
    p.set_defaults(fn=cmd_train_mlp)

    p = sub.add_parser("eval-grid", parents=[common],
                       help="single-fault grid over joints x rates")
    p.add_argument("--model", required=True,
                   help="checkpoint file, or a directory with the "
                        "12-teacher bank")
    p.set_defaults(fn=cmd_eval_grid)

    p = sub.add_parser("eval-sweep", parents=[common],
                       help="dense degradation sweep for one joint")
    p.add_argument("--model", required=True)
    p.add_argument("--joint", required=True)
    p.set_defaults(fn=cmd_eval_sweep)

    p = sub.add_parser("eval-gait", parents=[common],
                       help="contact/gravity logs under a fixed scenario")
    p.add_argument("--model", required=True)
    p.add_argument("--scenario", required=True,
                   help="JSON file with a saved fault scenario")
    p.add_argument("--vx", type=float,
                   help="pin the forward command instead of sampling it")
    p.set_defaults(fn=cmd_eval_gait)

    p = sub.add_parser("eval-multi", parents=[common],
                       help="simultaneous-fault reward tables")
    p.add_argument("--model", required=True)
    p.add_argument("--arity", required=True, choices=["2", "3", "all"])
    p.set_defaults(fn=cmd_eval_multi)

    p = sub.add_parser("selfcheck", parents=[common],
                       help="fast install smoke checks")
    p.set_defaults(fn=cmd_selfcheck)

    p = sub.add_parser("bench", parents=[common],
                       help="compare kernel backend step rates")
    p.add_argument("--steps", type=int, default=500,
                   help="control steps to time per backend")
    p.set_defaults(fn=cmd_bench)

    return parser


def _cap_workers(n):
    if n is None:
        return
    if n < 1:
        raise ConfigError("--workers must be >= 1")
    try:
        cpus = sorted(os.sched_getaffinity(0))
        os.sched_setaffinity(0, set(cpus[:n]))
    except (AttributeError, OSError):
        pass  # no affinity control on this platform; run unrestricted


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _cap_workers(args.workers)
        cfg = _resolve(args)
        if args.fn not in (cmd_selfcheck, cmd_bench):
            os.makedirs(cfg.out, exist_ok=True)
        return args.fn(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
