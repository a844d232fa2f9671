"""Leg kinematics and the PD torque law, reference implementations.

The leg is a 3-DoF chain: hip abduction about the body x axis, then thigh
and calf pitch in the sagittal plane. Angles follow the convention that the
nominal crouch is thigh +0.8, calf -1.5, which puts the foot almost
directly below the hip.

The simulation kernels inline these formulas; tests compare the two.
"""

import numpy as np


def foot_position(q_leg, l1, l2):
    """Foot position in the hip frame for one leg, q_leg = (hip, thigh, calf)."""
    qh, qt, qc = q_leg
    x = l1 * np.sin(qt) + l2 * np.sin(qt + qc)
    c12 = l1 * np.cos(qt) + l2 * np.cos(qt + qc)  # = -z before abduction
    return np.array([x, c12 * np.sin(qh), -c12 * np.cos(qh)])


def foot_jacobian(q_leg, l1, l2):
    """3x3 Jacobian of foot_position w.r.t. (hip, thigh, calf)."""
    qh, qt, qc = q_leg
    st, ct = np.sin(qt), np.cos(qt)
    stc, ctc = np.sin(qt + qc), np.cos(qt + qc)
    sh, ch = np.sin(qh), np.cos(qh)
    xs = l1 * st + l2 * stc
    c12 = l1 * ct + l2 * ctc
    return np.array(
        [
            [0.0, c12, l2 * ctc],
            [c12 * ch, -xs * sh, -l2 * stc * sh],
            [c12 * sh, xs * ch, l2 * stc * ch],
        ]
    )


def knee_position(q_leg, l1):
    """Knee (thigh endpoint) in the hip frame."""
    qh, qt, _ = q_leg
    st, ct = np.sin(qt), np.cos(qt)
    return np.array([l1 * st, l1 * ct * np.sin(qh), -l1 * ct * np.cos(qh)])


def pd_torque(target_q, q, qd, kp, kd):
    """Joint PD law with zero velocity target: kp (q* - q) - kd qd."""
    return kp * (np.asarray(target_q) - np.asarray(q)) - kd * np.asarray(qd)


def euler_to_matrix(rpy):
    """Body-to-world rotation from roll, pitch, yaw (Rz Ry Rx)."""
    r, p, y = rpy
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def gravity_in_body(rpy):
    """Unit gravity direction expressed in the body frame (R^T (0,0,-1))."""
    R = euler_to_matrix(rpy)
    return -R[2, :]
