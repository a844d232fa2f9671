"""Evaluation harness: episode logs, grid aggregation, sweeps, multi-joint
tables, gait/gravity reports, and the CSV artifact layer."""

import json
import math

import numpy as np
import pytest

from faultgait.baselines import MlpStudent, mlp_act
from faultgait.degradation import all_joints_fault, scenario_degradation, \
    single_fault
from faultgait.distill import HistoryBuffer, StudentConfig, StudentModel, \
    student_act
from faultgait.evaluation import (EpisodeLog, GRID_RATES, MlpController,
                                  StudentController, TeacherController,
                                  ZeroController, contact_gait_report,
                                  dense_sweep, eval_grid, eval_scenario, gait_stats,
                                  gravity_projection_series, make_controller,
                                  multi_joint_eval, run_episode,
                                  scenario_label, survival_time, write_gait,
                                  write_gaitstats,
                                  write_gravity, write_grid, write_multi,
                                  write_sweep)
from faultgait.joints import JOINT_NAMES, LEG_NAMES, N_JOINTS
from faultgait.rewards import TERM_NAMES
from faultgait.teacher import TeacherPolicy


def tiny_policy(seed=3):
    return TeacherPolicy(None, rng=np.random.default_rng(seed), hidden=(8,))


def standing_log(cap=30, seed=2):
    return run_episode(ZeroController(), single_fault(0, 0.0, 0), seed=seed,
                       cap=cap)


# -- run_episode ---------------------------------------------------------------

def test_run_episode_cap_zero_empty_log():
    log = run_episode(tiny_policy(), single_fault(0, 0.5, 0), seed=0, cap=0)
    assert log.steps == 0 and not log.fell
    assert log.rewards.shape == (0,)
    assert log.breakdown.shape == (0, len(TERM_NAMES))
    assert survival_time(log) == 0


def test_run_episode_deterministic():
    scenario = single_fault("FLT", 0.8, 5)
    a = run_episode(tiny_policy(), scenario, seed=11, cap=20)
    b = run_episode(tiny_policy(), scenario, seed=11, cap=20)
    assert a.fell == b.fell
    for field in ("rewards", "breakdown", "v_body", "g_xy", "foot_forces",
                  "contacts", "rates"):
        assert np.array_equal(getattr(a, field), getattr(b, field))


def test_reward_equals_breakdown_fold():
    log = run_episode(tiny_policy(), single_fault(0, 0.3, 3), seed=7, cap=40)
    assert np.allclose(log.rewards, log.breakdown.sum(axis=1), atol=1e-5)


def test_rates_follow_scenario_step_function():
    scenario = single_fault("FRC", 0.7, 10)
    log = run_episode(ZeroController(), scenario, seed=4, cap=25)
    assert log.steps == 25
    for t in range(25):
        assert np.array_equal(log.rates[t], scenario_degradation(scenario, t))


def test_all_joints_dead_falls_quickly():
    log = run_episode(ZeroController(), all_joints_fault(1.0, 0), seed=1,
                      cap=600)
    assert log.fell and survival_time(log) < 400


def test_survival_time_matches_log_length():
    stand = standing_log(cap=50)
    assert not stand.fell and survival_time(stand) == 50
    down = run_episode(ZeroController(), all_joints_fault(1.0, 0), seed=1,
                       cap=600)
    assert down.fell and survival_time(down) == down.steps


# -- controllers ---------------------------------------------------------------

def test_teacher_controller_reads_max_rate():
    policy = tiny_policy()
    ctl = make_controller(policy)
    assert isinstance(ctl, TeacherController)
    rng = np.random.default_rng(0)
    obs = rng.standard_normal((4, 48))
    d = np.zeros((4, 12))
    d[1, 7] = 0.6
    d[3, 2] = 0.2
    ctl.reset(4)
    assert np.array_equal(ctl.act(obs, d),
                          policy.act_batch(obs, np.array([0.0, 0.6, 0.0, 0.2])))


def test_student_controller_matches_student_act():
    cfg = StudentConfig(t_context=4, d_model=16, n_heads=2, n_blocks=2,
                        dropout=0.0)
    model = StudentModel(cfg, rng=np.random.default_rng(5))
    ctl = StudentController(model)
    ctl.reset(1)
    buffer = HistoryBuffer(cfg.t_context)
    rng = np.random.default_rng(6)
    for _ in range(6):
        s = rng.standard_normal(48)
        d = rng.random(12)
        batched = ctl.act(s[None], d[None])[0]
        single = student_act(model, buffer, s, d)
        assert np.array_equal(batched, single)


def test_mlp_controller_threads_prev_action():
    model = MlpStudent(hidden=(8,), rng=np.random.default_rng(7))
    ctl = make_controller(model)
    assert isinstance(ctl, MlpController)
    ctl.reset(1)
    rng = np.random.default_rng(8)
    s1, s2 = rng.standard_normal((2, 48))
    d = rng.random(12)
    a1 = ctl.act(s1[None], d[None])[0]
    a2 = ctl.act(s2[None], d[None])[0]
    assert np.array_equal(a1, mlp_act(model, s1, d, np.zeros(12)))
    assert np.array_equal(a2, mlp_act(model, s2, d, a1))


def test_make_controller_passthrough_and_rejection():
    zero = ZeroController()
    assert make_controller(zero) is zero
    assert isinstance(make_controller(StudentModel(
        StudentConfig(t_context=2, d_model=8, n_heads=2, n_blocks=1))),
        StudentController)
    with pytest.raises(TypeError):
        make_controller(object())


# -- grid ----------------------------------------------------------------------

def test_eval_grid_shape_and_single_sample_std():
    grid = eval_grid(ZeroController(), rates=(0.0,), episodes=1, seed=0,
                     cap=5, onset=0)
    assert grid.rates == (0.0,)
    assert grid.reward_mean.shape == (N_JOINTS, 1)
    assert np.all(grid.reward_std == 0.0)
    assert grid.episodes == 1


def test_eval_grid_matches_log_reaggregation():
    grid, logs = eval_grid(tiny_policy(), rates=(0.0, 1.0), episodes=3,
                           seed=5, cap=30, return_logs=True)
    for j in range(N_JOINTS):
        for k, rate in enumerate(grid.rates):
            cell = logs[(j, rate)]
            totals = np.array([log.rewards.sum() for log in cell])
            surv = np.array([float(survival_time(log)) for log in cell])
            assert grid.reward_mean[j, k] == totals.mean()
            assert grid.reward_std[j, k] == totals.std()
            assert grid.survival_mean[j, k] == surv.mean()


def test_eval_grid_deterministic_artifacts(tmp_path):
    contents = []
    for run in range(2):
        grid = eval_grid(tiny_policy(), rates=(0.0, 0.9), episodes=2, seed=3,
                         cap=15)
        out = tmp_path / f"run{run}"
        paths = write_grid(out, grid, info={"kind": "teacher"})
        contents.append(b"".join(p.encode() * 0 + open(p, "rb").read()
                                 for p in paths))
    assert contents[0] == contents[1]


def test_eval_grid_argument_validation():
    with pytest.raises(ValueError):
        eval_grid(ZeroController(), rates=())
    with pytest.raises(ValueError):
        eval_grid(ZeroController(), rates=(1.5,))
    with pytest.raises(ValueError):
        eval_grid(ZeroController(), rates=(0.0,), episodes=0)
    with pytest.raises(ValueError):
        eval_grid([tiny_policy()] * 3, rates=(0.0,))


def test_eval_grid_teacher_bank_dispatch():
    policy = tiny_policy()
    lone = eval_grid(policy, rates=(0.5,), episodes=1, seed=9, cap=10)
    bank = eval_grid([policy] * N_JOINTS, rates=(0.5,), episodes=1, seed=9,
                     cap=10)
    assert np.array_equal(lone.reward_mean, bank.reward_mean)


def test_grid_csv_layout(tmp_path):
    grid = eval_grid(ZeroController(), rates=(0.0, 1.0), episodes=1, seed=0,
                     cap=4, onset=0)
    paths = write_grid(tmp_path, grid, info={"checkpoint": "abc"})
    mean_path = [p for p in paths if p.endswith("grid_mean.csv")][0]
    lines = open(mean_path).read().splitlines()
    assert lines[0] == "joint,0,1"
    assert len(lines) == 1 + N_JOINTS
    assert [line.split(",")[0] for line in lines[1:]] == list(JOINT_NAMES)
    sidecar = json.load(open(mean_path.replace(".csv", ".json")))
    assert sidecar["checkpoint"] == "abc" and sidecar["episodes"] == 1


# -- sweep and multi-joint -----------------------------------------------------

def test_dense_sweep_rate_ladder():
    rows = dense_sweep(ZeroController(), "FRH", step=0.5, episodes=1, seed=0,
                       cap=4, onset=0)
    assert [row["rate"] for row in rows] == [0.0, 0.5, 1.0]
    rows = dense_sweep(ZeroController(), 0, step=0.3, episodes=1, seed=0,
                       cap=2, onset=0)
    assert len(rows) == 4
    with pytest.raises(ValueError):
        dense_sweep(ZeroController(), 0, step=0.0)


def test_multi_pairs_cover_all_66(tmp_path):
    rows = multi_joint_eval(ZeroController(), 2, rates=(1.0,), episodes=1,
                            seed=0, cap=3, onset=0)
    assert len(rows) == 66
    pairs = {(r["joint_a"], r["joint_b"]) for r in rows}
    assert len(pairs) == 66
    path = write_multi(str(tmp_path / "multi2.csv"), rows)
    header = open(path).readline().strip().split(",")
    assert header[:2] == ["joint_a", "joint_b"]


def test_multi_triples_sampled_draws():
    rows = multi_joint_eval(ZeroController(), 3, rates=(1.0,), episodes=1,
                            seed=1, cap=2, onset=0, draws=4)
    assert len(rows) == 4
    for row in rows:
        names = (row["joint_a"], row["joint_b"], row["joint_c"])
        assert len(set(names)) == 3
        idx = [JOINT_NAMES.index(n) for n in names]
        assert idx == sorted(idx)


def test_multi_all_rate_zero_survives_cap():
    rows = multi_joint_eval(ZeroController(), "all", rates=(0.0,), episodes=2,
                            seed=2, cap=30, onset=0)
    assert len(rows) == 1
    assert rows[0]["survival_mean"] == 30.0
    with pytest.raises(ValueError):
        multi_joint_eval(ZeroController(), 5)


# -- gait and gravity ----------------------------------------------------------

def test_gravity_series_rows_and_origin():
    logs = [standing_log(cap=20, seed=s) for s in (2, 8)]
    rows = gravity_projection_series(logs)
    assert len(rows) == sum(log.steps for log in logs)
    for row in rows:
        if row["step"] == 0:
            assert abs(row["g_x"]) < 0.1 and abs(row["g_y"]) < 0.1
    with pytest.raises(ValueError):
        gravity_projection_series([])


def test_contact_gait_report_intervals():
    report = contact_gait_report(standing_log(cap=40))
    for intervals in report["intervals"].values():
        for (s0, e0), (s1, e1) in zip(intervals, intervals[1:]):
            assert s0 < e0 <= s1 < e1
    assert len(report["steps"]) == 40


def test_contact_gait_report_airborne_and_empty():
    empty = EpisodeLog(scenario=single_fault(0, 0.0, 0), seed=0,
                       rewards=np.zeros(0),
                       breakdown=np.zeros((0, len(TERM_NAMES))),
                       v_body=np.zeros((0, 3)), g_xy=np.zeros((0, 2)),
                       foot_forces=np.zeros((0, 4)),
                       contacts=np.zeros((0, 4), bool),
                       rates=np.zeros((0, 12)), fell=False)
    with pytest.raises(ValueError):
        contact_gait_report(empty)
    airborne = EpisodeLog(scenario=single_fault(0, 0.0, 0), seed=0,
                          rewards=np.zeros(5),
                          breakdown=np.zeros((5, len(TERM_NAMES))),
                          v_body=np.zeros((5, 3)), g_xy=np.zeros((5, 2)),
                          foot_forces=np.zeros((5, 4)),
                          contacts=np.zeros((5, 4), bool),
                          rates=np.zeros((5, 12)), fell=False)
    report = contact_gait_report(airborne)
    assert all(v == [] for v in report["intervals"].values())


def test_scenario_labels():
    assert scenario_label(single_fault("FRC", 1.0, 200)) == "FRC1_on200"
    assert scenario_label(all_joints_fault(0.25, 0)) == "all0.25_on0"
    two = scenario_label(
        single_fault(0, 0.5, 7).__class__(((0, 0.5), (11, 0.9)), 7))
    assert two == "FRH0.5+RLC0.9_on7"


# -- writers -------------------------------------------------------------------

def test_sweep_and_gravity_and_gait_files(tmp_path):
    log = standing_log(cap=10)
    sweep = dense_sweep(ZeroController(), 2, step=0.5, episodes=1, seed=0,
                        cap=4, onset=0)
    p1 = write_sweep(str(tmp_path / "sweep_FRC.csv"), sweep, info={"seed": 0})
    p2 = write_gravity(str(tmp_path / "gravity_x.csv"),
                       gravity_projection_series([log]))
    p3 = write_gait(str(tmp_path / "gait_x.csv"), contact_gait_report(log))
    for path in (p1, p2, p3):
        lines = open(path).read().splitlines()
        assert len(lines) > 1 and "," in lines[0]
        sidecar = json.load(open(path.replace(".csv", ".json")))
        assert isinstance(sidecar, dict)
    assert json.load(open(p1.replace(".csv", ".json")))["seed"] == 0


# -- fixed-scenario batches ------------------------------------------------------

def test_eval_scenario_batch():
    scenario = single_fault(2, 1.0, 6)
    logs = eval_scenario(ZeroController(), scenario, episodes=3, seed=4,
                         cap=20)
    assert len(logs) == 3
    again = eval_scenario(ZeroController(), scenario, episodes=3, seed=4,
                          cap=20)
    for a, b in zip(logs, again):
        assert np.array_equal(a.rewards, b.rewards)
    # the scenario's own onset applies to every episode
    for log in logs:
        assert np.array_equal(log.rates[5], np.zeros(12))
        want = np.zeros(12)
        want[2] = 1.0
        if log.steps > 6:
            assert np.array_equal(log.rates[6], want)
    with pytest.raises(ValueError):
        eval_scenario(ZeroController(), scenario, episodes=0)


def test_gait_stats_windows():
    logs = eval_scenario(ZeroController(), single_fault(0, 0.0, 0),
                         episodes=2, seed=1, cap=30)
    rows = gait_stats(logs, onset=15, window=10)
    assert [r["episode"] for r in rows] == [0, 1]
    for row in rows:
        # standing: the robot's weight rests somewhere on both sides of
        # the onset, though a randomized payload may unload single feet
        for tag in ("pre", "post"):
            total = sum(row[f"{tag}_force_{leg}"] for leg in LEG_NAMES)
            assert total > 50.0
        assert abs(row["pre_g_x"]) < 0.2 and abs(row["post_g_x"]) < 0.2
        assert row["fell"] == 0


def test_gait_stats_nan_for_unreached_windows():
    log = standing_log(cap=10)
    rows = gait_stats([log], onset=50, window=10)
    assert math.isnan(rows[0]["post_force_FR"])
    assert math.isnan(rows[0]["post_g_x"])
    assert math.isnan(rows[0]["pre_force_FR"])  # window [40, 50) unreached
    rows = gait_stats([log], onset=8, window=5)
    assert rows[0]["pre_force_FR"] > 0.0
    assert rows[0]["post_force_FR"] > 0.0


def test_write_gaitstats_file(tmp_path):
    rows = gait_stats([standing_log(cap=12)], onset=6, window=4)
    path = write_gaitstats(str(tmp_path / "gaitstats_x.csv"), rows,
                           info={"scenario": "x"})
    lines = open(path).read().splitlines()
    assert lines[0].startswith("episode,steps,fell,pre_force_FR")
    assert len(lines) == 2
    assert json.load(open(path.replace(".csv", ".json")))["scenario"] == "x"


def test_eval_scenario_pinned_command():
    from faultgait.sim.config import Command

    scenario = single_fault(4, 0.5, 2)
    pinned = eval_scenario(ZeroController(), scenario, episodes=2, seed=9,
                           cap=12, command=Command(vx=0.7))
    again = eval_scenario(ZeroController(), scenario, episodes=2, seed=9,
                          cap=12, command=Command(vx=0.7))
    sampled = eval_scenario(ZeroController(), scenario, episodes=2, seed=9,
                            cap=12)
    for a, b in zip(pinned, again):
        assert np.array_equal(a.rewards, b.rewards)
    # a pinned command changes the tracking reward stream
    assert any(not np.array_equal(a.rewards, b.rewards)
               for a, b in zip(pinned, sampled))
