"""Scripted reference trot used as the imitation (style) source.

Open-loop joint targets for a diagonal-pair trot at a given command. The
thigh swings sinusoidally with an amplitude matched to the commanded
stride; the calf flexes during the swing half to lift the foot. At zero
command the gait degenerates to the nominal standing pose exactly.

Phase convention: legs FL and RR share phase; FR and RL are offset half a
period. A leg's swing (foot moving forward, lifted) occupies the half
period where sin(2 pi phase) < 0.
"""

import numpy as np

from ..joints import N_JOINTS
from .config import SimConfig

GAIT_PERIOD = 0.4          # seconds per full trot cycle
_PHASE_OFFSET = (0.5, 0.0, 0.0, 0.5)  # FR, FL, RR, RL
_LIFT_BASE = 0.25          # calf flexion whenever the leg is stepping at all
_LIFT_RATE = 0.4           # extra flexion per m/s of leg speed


def _thigh_amplitude(v_leg, cfg):
    # stride length v T / 2 spread over the stance sweep 2 A dx/dq
    c12 = cfg.l1 * np.cos(cfg.nominal_pose[1]) + cfg.l2 * np.cos(cfg.nominal_pose[1] + cfg.nominal_pose[2])
    return v_leg * GAIT_PERIOD / (4.0 * c12)


def reference_gait(phase, command, cfg=None):
    """Joint targets (12,) for global gait phase in [0, 1)."""
    cfg = cfg or SimConfig()
    nominal = np.asarray(cfg.nominal_pose, dtype=np.float64)
    q = nominal.copy()
    hip_y = (-cfg.hip_y, cfg.hip_y, -cfg.hip_y, cfg.hip_y)
    vx, _, yaw = command.vx, command.vy, command.yaw_rate
    for leg in range(4):
        v_leg = max(vx - yaw * hip_y[leg], 0.0)
        ph = 2.0 * np.pi * ((phase + _PHASE_OFFSET[leg]) % 1.0)
        q[3 * leg + 1] += _thigh_amplitude(v_leg, cfg) * np.cos(ph)
        if v_leg > 0.0:
            # constant part keeps swing clearance from vanishing at low speed
            lift = _LIFT_BASE + _LIFT_RATE * v_leg
            q[3 * leg + 2] -= lift * max(0.0, -np.sin(ph))
    return q


def expert_state_sequence(command, n_steps, cfg=None, phase0=0.0):
    """Kinematic (q, qd, v, w) rollout of the reference gait at 50 Hz.

    Joint velocities are finite differences of the scripted targets; the
    base moves exactly at the command. Returns arrays shaped (n_steps, .).
    """
    cfg = cfg or SimConfig()
    dt = cfg.control_dt()
    qs = np.empty((n_steps + 1, N_JOINTS))
    for i in range(n_steps + 1):
        phase = (phase0 + i * dt / GAIT_PERIOD) % 1.0
        qs[i] = reference_gait(phase, command, cfg)
    qd = (qs[1:] - qs[:-1]) / dt
    q = qs[:-1]
    v = np.tile([command.vx, command.vy, 0.0], (n_steps, 1))
    w = np.tile([0.0, 0.0, command.yaw_rate], (n_steps, 1))
    return q, qd, v, w
