"""Numpy control-step kernel, vectorized across environments.

This file defines the integration semantics; the compiled kernel mirrors it
expression for expression so both produce bit-identical trajectories (the
extension is built with FMA contraction disabled for that reason).

One control step = `n_substeps` semi-implicit Euler substeps with a fixed
joint target. Per substep and per environment:

  1. PD torque, motor scaling, saturation at the torque limit, then the
     fault model: applied torque = saturated torque * (1 - d) per joint.
  2. Per leg: foot position/Jacobian, ground contact test, contact force.
     The normal force is a unilateral spring-damper, tangential friction is
     viscous. A foot is in contact when it penetrates AND the provisional
     normal force (using current velocities) is positive.
  3. Joint velocity update. Contact damping acting through the leg Jacobian
     is far stiffer than the reflected joint inertia allows explicitly at
     dt = 5 ms, so the damping term is integrated implicitly: each leg
     solves the SPD 3x3 system
         (M + dt (b I + B^T C B)) qd_new = M qd + dt (tau + B^T f_expl)
     where B is the world-frame foot Jacobian, C the contact damping
     matrix, and f_expl collects the spring force plus damping against the
     base-motion part of the foot velocity. Positions integrate with the
     new velocity and clamp at joint limits.
  4. Trunk: a point mass with diagonal rotational inertia. Foot forces and
     their moments integrate the linear and angular velocity; orientation
     integrates Euler rates = body rates, which is the small roll/pitch
     approximation (yaw may be large).

Environments where the state goes non-finite or blows up are rolled back
to their pre-step state and flagged diverged. Results for envs with
active = 0 are unspecified; their state is preserved.
"""

import numpy as np

from .kernel_layout import (
    CFG_BASE_CLEARANCE,
    CFG_BASE_IXX,
    CFG_BASE_IYY,
    CFG_BASE_IZZ,
    CFG_CONTACT_K,
    CFG_DT,
    CFG_GRAVITY,
    CFG_JOINT_DAMPING,
    CFG_KNEE_CLEARANCE,
    CFG_L1,
    CFG_L2,
    CFG_TORQUE_LIMIT,
)

BACKEND_NAME = "numpy"


def step_envs(
    cfg,
    hips,
    limit_low,
    limit_high,
    jinertia,
    motor,
    kp,
    kd,
    mass,
    c_norm,
    c_tan,
    q,
    qd,
    pos,
    rpy,
    vel,
    angvel,
    target,
    degr,
    active,
    n_substeps,
    out_contact,
    out_fz,
    out_fmean,
    out_tau_sq,
    out_tau,
    out_collisions,
    out_diverged,
):
    dt = cfg[CFG_DT]
    l1 = cfg[CFG_L1]
    l2 = cfg[CFG_L2]
    kn = cfg[CFG_CONTACT_K]
    tlim = cfg[CFG_TORQUE_LIMIT]
    b_damp = cfg[CFG_JOINT_DAMPING]
    grav = cfg[CFG_GRAVITY]
    bixx = cfg[CFG_BASE_IXX]
    biyy = cfg[CFG_BASE_IYY]
    bizz = cfg[CFG_BASE_IZZ]
    base_clear = cfg[CFG_BASE_CLEARANCE]
    knee_clear = cfg[CFG_KNEE_CLEARANCE]

    n = q.shape[0]
    entry = (q.copy(), qd.copy(), pos.copy(), rpy.copy(), vel.copy(), angvel.copy())

    out_fmean[...] = 0.0
    out_tau_sq[...] = 0.0
    out_collisions[...] = 0
    out_diverged[...] = 0

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for sub in range(n_substeps):
            last = sub == n_substeps - 1

            # PD torque -> motor scaling -> saturation -> fault attenuation
            tau_pd = kp[:, None] * (target - q) - kd[:, None] * qd
            tau = np.minimum(np.maximum(tau_pd * motor, -tlim), tlim) * (1.0 - degr)

            t2 = tau * tau
            ssum = t2[:, 0]
            for j in range(1, 12):
                ssum = ssum + t2[:, j]
            out_tau_sq += ssum

            cr, sr = np.cos(rpy[:, 0]), np.sin(rpy[:, 0])
            cp, sp = np.cos(rpy[:, 1]), np.sin(rpy[:, 1])
            cy, sy = np.cos(rpy[:, 2]), np.sin(rpy[:, 2])
            R00 = cy * cp
            R01 = cy * sp * sr - sy * cr
            R02 = cy * sp * cr + sy * sr
            R10 = sy * cp
            R11 = sy * sp * sr + cy * cr
            R12 = sy * sp * cr - cy * sr
            R20 = -sp
            R21 = cp * sr
            R22 = cp * cr

            wx, wy, wz = angvel[:, 0], angvel[:, 1], angvel[:, 2]
            wwx = R00 * wx + R01 * wy + R02 * wz
            wwy = R10 * wx + R11 * wy + R12 * wz
            wwz = R20 * wx + R21 * wy + R22 * wz

            fs_x = np.zeros(n)
            fs_y = np.zeros(n)
            fs_z = np.zeros(n)
            tw_x = np.zeros(n)
            tw_y = np.zeros(n)
            tw_z = np.zeros(n)
            if last:
                ncoll = np.zeros(n, dtype=np.int32)

            for leg in range(4):
                j0 = 3 * leg
                qh, qt, qc = q[:, j0], q[:, j0 + 1], q[:, j0 + 2]
                qdh, qdt, qdc = qd[:, j0], qd[:, j0 + 1], qd[:, j0 + 2]
                st, ct = np.sin(qt), np.cos(qt)
                stc, ctc = np.sin(qt + qc), np.cos(qt + qc)
                sh, ch = np.sin(qh), np.cos(qh)
                xs = l1 * st + l2 * stc
                c12 = l1 * ct + l2 * ctc

                # foot in trunk frame
                bx = hips[:, leg, 0] + xs
                by = hips[:, leg, 1] + c12 * sh
                bz = hips[:, leg, 2] - c12 * ch

                # hip-frame Jacobian columns (hip, thigh, calf)
                J10 = c12 * ch
                J20 = c12 * sh
                J01 = c12
                J11 = -(xs * sh)
                J21 = xs * ch
                J02 = l2 * ctc
                J12 = -(l2 * stc * sh)
                J22 = l2 * stc * ch

                # world-frame Jacobian B = R J (J00 = 0)
                Bxh = R01 * J10 + R02 * J20
                Byh = R11 * J10 + R12 * J20
                Bzh = R21 * J10 + R22 * J20
                Bxt = R00 * J01 + R01 * J11 + R02 * J21
                Byt = R10 * J01 + R11 * J11 + R12 * J21
                Bzt = R20 * J01 + R21 * J11 + R22 * J21
                Bxc = R00 * J02 + R01 * J12 + R02 * J22
                Byc = R10 * J02 + R11 * J12 + R12 * J22
                Bzc = R20 * J02 + R21 * J12 + R22 * J22

                rwx = R00 * bx + R01 * by + R02 * bz
                rwy = R10 * bx + R11 * by + R12 * bz
                rwz = R20 * bx + R21 * by + R22 * bz
                foot_z = pos[:, 2] + rwz

                vfbx = vel[:, 0] + (wwy * rwz - wwz * rwy)
                vfby = vel[:, 1] + (wwz * rwx - wwx * rwz)
                vfbz = vel[:, 2] + (wwx * rwy - wwy * rwx)

                pen = -foot_z
                contact = pen > 0.0

                gex = np.where(contact, -(c_tan * vfbx), 0.0)
                gey = np.where(contact, -(c_tan * vfby), 0.0)
                gez = np.where(contact, kn * pen - c_norm * vfbz, 0.0)
                gq_h = Bxh * gex + Byh * gey + Bzh * gez
                gq_t = Bxt * gex + Byt * gey + Bzt * gez
                gq_c = Bxc * gex + Byc * gey + Bzc * gez

                cte = np.where(contact, c_tan, 0.0)
                cne = np.where(contact, c_norm, 0.0)
                Dhh = cte * (Bxh * Bxh + Byh * Byh) + cne * (Bzh * Bzh)
                Dht = cte * (Bxh * Bxt + Byh * Byt) + cne * (Bzh * Bzt)
                Dhc = cte * (Bxh * Bxc + Byh * Byc) + cne * (Bzh * Bzc)
                Dtt = cte * (Bxt * Bxt + Byt * Byt) + cne * (Bzt * Bzt)
                Dtc = cte * (Bxt * Bxc + Byt * Byc) + cne * (Bzt * Bzc)
                Dcc = cte * (Bxc * Bxc + Byc * Byc) + cne * (Bzc * Bzc)

                Ih = jinertia[:, j0]
                It = jinertia[:, j0 + 1]
                Ic = jinertia[:, j0 + 2]
                A00 = Ih + dt * (b_damp + Dhh)
                A01 = dt * Dht
                A02 = dt * Dhc
                A11 = It + dt * (b_damp + Dtt)
                A12 = dt * Dtc
                A22 = Ic + dt * (b_damp + Dcc)
                r0 = Ih * qdh + dt * (tau[:, j0] + gq_h)
                r1 = It * qdt + dt * (tau[:, j0 + 1] + gq_t)
                r2 = Ic * qdc + dt * (tau[:, j0 + 2] + gq_c)

                c00 = A11 * A22 - A12 * A12
                c01 = A02 * A12 - A01 * A22
                c02 = A01 * A12 - A02 * A11
                c11 = A00 * A22 - A02 * A02
                c12_ = A02 * A01 - A00 * A12
                c22 = A00 * A11 - A01 * A01
                det = A00 * c00 + A01 * c01 + A02 * c02
                qdh_n = (c00 * r0 + c01 * r1 + c02 * r2) / det
                qdt_n = (c01 * r0 + c11 * r1 + c12_ * r2) / det
                qdc_n = (c02 * r0 + c12_ * r1 + c22 * r2) / det

                # foot force from post-solve velocities so the trunk sees the
                # same (implicitly damped) force the joints reacted to
                vfx = vfbx + (Bxh * qdh_n + Bxt * qdt_n + Bxc * qdc_n)
                vfy = vfby + (Byh * qdh_n + Byt * qdt_n + Byc * qdc_n)
                vfz = vfbz + (Bzh * qdh_n + Bzt * qdt_n + Bzc * qdc_n)
                fz_new = kn * pen - c_norm * vfz
                Fx = np.where(contact, -(c_tan * vfx), 0.0)
                Fy = np.where(contact, -(c_tan * vfy), 0.0)
                Fz = np.where(contact, np.maximum(fz_new, 0.0), 0.0)

                for k, qdk in ((0, qdh_n), (1, qdt_n), (2, qdc_n)):
                    jj = j0 + k
                    qn = q[:, jj] + dt * qdk
                    hi_hit = qn > limit_high[jj]
                    lo_hit = qn < limit_low[jj]
                    qn = np.minimum(np.maximum(qn, limit_low[jj]), limit_high[jj])
                    qdk = np.where(hi_hit, np.minimum(qdk, 0.0), qdk)
                    qdk = np.where(lo_hit, np.maximum(qdk, 0.0), qdk)
                    q[:, jj] = qn
                    qd[:, jj] = qdk

                fs_x = fs_x + Fx
                fs_y = fs_y + Fy
                fs_z = fs_z + Fz
                tw_x = tw_x + (rwy * Fz - rwz * Fy)
                tw_y = tw_y + (rwz * Fx - rwx * Fz)
                tw_z = tw_z + (rwx * Fy - rwy * Fx)

                out_fmean[:, leg, 0] += Fx
                out_fmean[:, leg, 1] += Fy
                out_fmean[:, leg, 2] += Fz
                if last:
                    out_contact[:, leg] = contact
                    out_fz[:, leg] = Fz
                    # knee below clearance counts as a calf ground collision
                    kbx = hips[:, leg, 0] + l1 * st
                    kby = hips[:, leg, 1] + l1 * ct * sh
                    kbz = hips[:, leg, 2] - l1 * ct * ch
                    knee_z = pos[:, 2] + (R20 * kbx + R21 * kby + R22 * kbz)
                    ncoll += (knee_z < knee_clear).astype(np.int32)

            if last:
                ncoll += (pos[:, 2] < base_clear).astype(np.int32)
                out_collisions[...] = ncoll
                out_tau[...] = tau

            vel[:, 0] += dt * (fs_x / mass)
            vel[:, 1] += dt * (fs_y / mass)
            vel[:, 2] += dt * (fs_z / mass - grav)
            pos += dt * vel

            tbx = R00 * tw_x + R10 * tw_y + R20 * tw_z
            tby = R01 * tw_x + R11 * tw_y + R21 * tw_z
            tbz = R02 * tw_x + R12 * tw_y + R22 * tw_z
            angvel[:, 0] += dt * (tbx / bixx)
            angvel[:, 1] += dt * (tby / biyy)
            angvel[:, 2] += dt * (tbz / bizz)
            rpy += dt * angvel

    out_fmean /= n_substeps
    out_tau_sq /= n_substeps

    finite = np.isfinite(q).all(axis=1)
    for arr in (qd, pos, rpy, vel, angvel):
        finite &= np.isfinite(arr).all(axis=1)
    sane = finite & (np.abs(qd).max(axis=1) < 1e4) & (np.abs(vel).max(axis=1) < 1e3) & (np.abs(pos[:, 2]) < 10.0)
    bad = ~sane

    restore = bad | (active == 0)
    if restore.any():
        for current, saved in zip((q, qd, pos, rpy, vel, angvel), entry):
            current[restore] = saved[restore]
    out_diverged[...] = (bad & (active != 0)).astype(np.uint8)
