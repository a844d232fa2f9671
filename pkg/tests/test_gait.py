"""Reference trot: pose identities, phase structure, kinematic sequence."""

import numpy as np

from faultgait.joints import N_JOINTS
from faultgait.sim import Command, SimConfig, expert_state_sequence, reference_gait
from faultgait.sim.config import NOMINAL_POSE
from faultgait.sim.gait import GAIT_PERIOD

CFG = SimConfig()


def test_zero_command_is_nominal_pose():
    for phase in np.linspace(0.0, 1.0, 7):
        q = reference_gait(phase, Command(0.0, 0.0, 0.0), CFG)
        assert np.array_equal(q, np.asarray(NOMINAL_POSE))


def test_diagonal_pairs_in_phase():
    cmd = Command(0.6, 0.0, 0.0)
    for phase in np.linspace(0.0, 1.0, 9):
        q = reference_gait(phase, cmd, CFG)
        # FR+RL move together, FL+RR together, half a period apart
        assert np.allclose(q[0:3], q[9:12])
        assert np.allclose(q[3:6], q[6:9])
        q_half = reference_gait((phase + 0.5) % 1.0, cmd, CFG)
        assert np.allclose(q[0:3], q_half[3:6])


def test_amplitude_scales_with_speed():
    def swing(v):
        cmd = Command(v, 0.0, 0.0)
        qs = np.array([reference_gait(p, cmd, CFG) for p in np.linspace(0, 1, 50, endpoint=False)])
        return qs[:, 1].max() - qs[:, 1].min()

    assert swing(0.8) > swing(0.4) > swing(0.1) > 0.0


def test_yaw_differentiates_sides():
    cmd = Command(0.5, 0.0, 1.0)
    qs = np.array([reference_gait(p, cmd, CFG) for p in np.linspace(0, 1, 50, endpoint=False)])
    # turning left: right legs sweep more than left legs
    right = qs[:, 1].max() - qs[:, 1].min()
    left = qs[:, 4].max() - qs[:, 4].min()
    assert right > left


def test_expert_sequence_shapes_and_rates():
    cmd = Command(0.6, 0.0, 0.2)
    seq = expert_state_sequence(cmd, 40, CFG)
    q, qd, v, w = seq
    assert q.shape == (40, N_JOINTS) and qd.shape == (40, N_JOINTS)
    assert v.shape == (40, 3) and w.shape == (40, 3)
    assert np.allclose(v[:, 0], 0.6) and np.allclose(w[:, 2], 0.2)
    # forward differences of the scripted positions at the control rate
    dt = CFG.control_dt()
    num = (q[1:] - q[:-1]) / dt
    assert np.allclose(qd[:-1], num, atol=1e-9)


def test_expert_sequence_is_periodic():
    cmd = Command(0.4, 0.0, 0.0)
    steps_per_period = int(round(GAIT_PERIOD / CFG.control_dt()))
    q, _, _, _ = expert_state_sequence(cmd, 3 * steps_per_period, CFG)
    assert np.allclose(q[:steps_per_period], q[steps_per_period:2 * steps_per_period], atol=1e-12)


def test_expert_never_exceeds_joint_limits():
    lo = np.asarray(CFG.joint_limit_low)
    hi = np.asarray(CFG.joint_limit_high)
    for v in (0.2, 0.6, 1.0):
        q, _, _, _ = expert_state_sequence(Command(v, 0.0, 0.5), 200, CFG)
        assert np.all(q >= lo) and np.all(q <= hi)
