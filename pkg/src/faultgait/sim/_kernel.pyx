# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled control-step kernel.

Mirrors kernel_py.step_envs expression for expression; see that module for
the semantics. The build disables FMA contraction so float results match
the numpy kernel bit for bit.
"""

from libc.math cimport sin, cos, fabs, isfinite

from .kernel_layout import (
    CFG_BASE_CLEARANCE, CFG_BASE_IXX, CFG_BASE_IYY, CFG_BASE_IZZ,
    CFG_CONTACT_K, CFG_DT, CFG_GRAVITY, CFG_JOINT_DAMPING,
    CFG_KNEE_CLEARANCE, CFG_L1, CFG_L2, CFG_TORQUE_LIMIT,
)

BACKEND_NAME = "compiled"


def step_envs(
    double[::1] cfg,
    double[:, :, ::1] hips,
    double[::1] limit_low,
    double[::1] limit_high,
    double[:, ::1] jinertia,
    double[:, ::1] motor,
    double[::1] kp,
    double[::1] kd,
    double[::1] mass,
    double[::1] c_norm,
    double[::1] c_tan,
    double[:, ::1] q,
    double[:, ::1] qd,
    double[:, ::1] pos,
    double[:, ::1] rpy,
    double[:, ::1] vel,
    double[:, ::1] angvel,
    double[:, ::1] target,
    double[:, ::1] degr,
    unsigned char[::1] active,
    int n_substeps,
    unsigned char[:, ::1] out_contact,
    double[:, ::1] out_fz,
    double[:, :, ::1] out_fmean,
    double[::1] out_tau_sq,
    double[:, ::1] out_tau,
    int[::1] out_collisions,
    unsigned char[::1] out_diverged,
):
    cdef double dt = cfg[CFG_DT]
    cdef double l1 = cfg[CFG_L1]
    cdef double l2 = cfg[CFG_L2]
    cdef double kn = cfg[CFG_CONTACT_K]
    cdef double tlim = cfg[CFG_TORQUE_LIMIT]
    cdef double b_damp = cfg[CFG_JOINT_DAMPING]
    cdef double grav = cfg[CFG_GRAVITY]
    cdef double bixx = cfg[CFG_BASE_IXX]
    cdef double biyy = cfg[CFG_BASE_IYY]
    cdef double bizz = cfg[CFG_BASE_IZZ]
    cdef double base_clear = cfg[CFG_BASE_CLEARANCE]
    cdef double knee_clear = cfg[CFG_KNEE_CLEARANCE]

    cdef Py_ssize_t n = q.shape[0]
    cdef Py_ssize_t e
    cdef int sub, j, leg, j0, k, ncoll
    cdef bint last, contact, hi_hit, lo_hit, bad
    cdef double eq[12]
    cdef double eqd[12]
    cdef double epos[3]
    cdef double erpy[3]
    cdef double evel[3]
    cdef double eang[3]
    cdef double tau[12]
    cdef double facc[4][3]
    cdef double tausq_acc, ssum, tau_pd, tq
    cdef double cr, sr, cp, sp, cy, sy
    cdef double R00, R01, R02, R10, R11, R12, R20, R21, R22
    cdef double wx, wy, wz, wwx, wwy, wwz
    cdef double fs_x, fs_y, fs_z, tw_x, tw_y, tw_z
    cdef double qh, qt, qc, qdh, qdt, qdc
    cdef double st, ct, stc, ctc, sh, ch, xs, c12
    cdef double bx, by, bz
    cdef double J10, J20, J01, J11, J21, J02, J12, J22
    cdef double Bxh, Byh, Bzh, Bxt, Byt, Bzt, Bxc, Byc, Bzc
    cdef double rwx, rwy, rwz, foot_z
    cdef double vfbx, vfby, vfbz, vfx, vfy, vfz
    cdef double pen, fz_new, Fx, Fy, Fz, gex, gey, gez
    cdef double gq_h, gq_t, gq_c, cte, cne
    cdef double Dhh, Dht, Dhc, Dtt, Dtc, Dcc
    cdef double Ih, It, Ic
    cdef double A00, A01, A02, A11, A12, A22, r0, r1, r2
    cdef double c00, c01, c02, c11, c12_, c22, det
    cdef double qdh_n, qdt_n, qdc_n, qn, qdk
    cdef double kbx, kby, kbz, knee_z
    cdef double tbx, tby, tbz, maxqd, maxv

    for e in range(n):
        if active[e] == 0:
            continue
        for j in range(12):
            eq[j] = q[e, j]
            eqd[j] = qd[e, j]
        for k in range(3):
            epos[k] = pos[e, k]
            erpy[k] = rpy[e, k]
            evel[k] = vel[e, k]
            eang[k] = angvel[e, k]
        for leg in range(4):
            for k in range(3):
                facc[leg][k] = 0.0
        tausq_acc = 0.0

        for sub in range(n_substeps):
            last = sub == n_substeps - 1

            # PD torque -> motor scaling -> saturation -> fault attenuation
            for j in range(12):
                tau_pd = kp[e] * (target[e, j] - q[e, j]) - kd[e] * qd[e, j]
                tq = tau_pd * motor[e, j]
                if tq < -tlim:
                    tq = -tlim
                if tq > tlim:
                    tq = tlim
                tau[j] = tq * (1.0 - degr[e, j])

            ssum = tau[0] * tau[0]
            for j in range(1, 12):
                ssum = ssum + tau[j] * tau[j]
            tausq_acc = tausq_acc + ssum

            cr = cos(rpy[e, 0]); sr = sin(rpy[e, 0])
            cp = cos(rpy[e, 1]); sp = sin(rpy[e, 1])
            cy = cos(rpy[e, 2]); sy = sin(rpy[e, 2])
            R00 = cy * cp
            R01 = cy * sp * sr - sy * cr
            R02 = cy * sp * cr + sy * sr
            R10 = sy * cp
            R11 = sy * sp * sr + cy * cr
            R12 = sy * sp * cr - cy * sr
            R20 = -sp
            R21 = cp * sr
            R22 = cp * cr

            wx = angvel[e, 0]; wy = angvel[e, 1]; wz = angvel[e, 2]
            wwx = R00 * wx + R01 * wy + R02 * wz
            wwy = R10 * wx + R11 * wy + R12 * wz
            wwz = R20 * wx + R21 * wy + R22 * wz

            fs_x = 0.0; fs_y = 0.0; fs_z = 0.0
            tw_x = 0.0; tw_y = 0.0; tw_z = 0.0
            ncoll = 0

            for leg in range(4):
                j0 = 3 * leg
                qh = q[e, j0]; qt = q[e, j0 + 1]; qc = q[e, j0 + 2]
                qdh = qd[e, j0]; qdt = qd[e, j0 + 1]; qdc = qd[e, j0 + 2]
                st = sin(qt); ct = cos(qt)
                stc = sin(qt + qc); ctc = cos(qt + qc)
                sh = sin(qh); ch = cos(qh)
                xs = l1 * st + l2 * stc
                c12 = l1 * ct + l2 * ctc

                # foot in trunk frame
                bx = hips[e, leg, 0] + xs
                by = hips[e, leg, 1] + c12 * sh
                bz = hips[e, leg, 2] - c12 * ch

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
                foot_z = pos[e, 2] + rwz

                vfbx = vel[e, 0] + (wwy * rwz - wwz * rwy)
                vfby = vel[e, 1] + (wwz * rwx - wwx * rwz)
                vfbz = vel[e, 2] + (wwx * rwy - wwy * rwx)

                pen = -foot_z
                contact = pen > 0.0

                if contact:
                    gex = -(c_tan[e] * vfbx)
                    gey = -(c_tan[e] * vfby)
                    gez = kn * pen - c_norm[e] * vfbz
                    cte = c_tan[e]
                    cne = c_norm[e]
                else:
                    gex = 0.0; gey = 0.0; gez = 0.0
                    cte = 0.0; cne = 0.0

                gq_h = Bxh * gex + Byh * gey + Bzh * gez
                gq_t = Bxt * gex + Byt * gey + Bzt * gez
                gq_c = Bxc * gex + Byc * gey + Bzc * gez

                Dhh = cte * (Bxh * Bxh + Byh * Byh) + cne * (Bzh * Bzh)
                Dht = cte * (Bxh * Bxt + Byh * Byt) + cne * (Bzh * Bzt)
                Dhc = cte * (Bxh * Bxc + Byh * Byc) + cne * (Bzh * Bzc)
                Dtt = cte * (Bxt * Bxt + Byt * Byt) + cne * (Bzt * Bzt)
                Dtc = cte * (Bxt * Bxc + Byt * Byc) + cne * (Bzt * Bzc)
                Dcc = cte * (Bxc * Bxc + Byc * Byc) + cne * (Bzc * Bzc)

                Ih = jinertia[e, j0]
                It = jinertia[e, j0 + 1]
                Ic = jinertia[e, j0 + 2]
                A00 = Ih + dt * (b_damp + Dhh)
                A01 = dt * Dht
                A02 = dt * Dhc
                A11 = It + dt * (b_damp + Dtt)
                A12 = dt * Dtc
                A22 = Ic + dt * (b_damp + Dcc)
                r0 = Ih * qdh + dt * (tau[j0] + gq_h)
                r1 = It * qdt + dt * (tau[j0 + 1] + gq_t)
                r2 = Ic * qdc + dt * (tau[j0 + 2] + gq_c)

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
                fz_new = kn * pen - c_norm[e] * vfz
                if contact:
                    Fx = -(c_tan[e] * vfx)
                    Fy = -(c_tan[e] * vfy)
                    Fz = 0.0 if fz_new < 0.0 else fz_new
                else:
                    Fx = 0.0; Fy = 0.0; Fz = 0.0

                for k in range(3):
                    j = j0 + k
                    if k == 0:
                        qdk = qdh_n
                    elif k == 1:
                        qdk = qdt_n
                    else:
                        qdk = qdc_n
                    qn = q[e, j] + dt * qdk
                    hi_hit = qn > limit_high[j]
                    lo_hit = qn < limit_low[j]
                    if qn < limit_low[j]:
                        qn = limit_low[j]
                    if qn > limit_high[j]:
                        qn = limit_high[j]
                    if hi_hit and qdk > 0.0:
                        qdk = 0.0
                    if lo_hit and qdk < 0.0:
                        qdk = 0.0
                    q[e, j] = qn
                    qd[e, j] = qdk

                fs_x = fs_x + Fx
                fs_y = fs_y + Fy
                fs_z = fs_z + Fz
                tw_x = tw_x + (rwy * Fz - rwz * Fy)
                tw_y = tw_y + (rwz * Fx - rwx * Fz)
                tw_z = tw_z + (rwx * Fy - rwy * Fx)

                facc[leg][0] = facc[leg][0] + Fx
                facc[leg][1] = facc[leg][1] + Fy
                facc[leg][2] = facc[leg][2] + Fz
                if last:
                    out_contact[e, leg] = 1 if contact else 0
                    out_fz[e, leg] = Fz
                    # knee below clearance counts as a calf ground collision
                    kbx = hips[e, leg, 0] + l1 * st
                    kby = hips[e, leg, 1] + l1 * ct * sh
                    kbz = hips[e, leg, 2] - l1 * ct * ch
                    knee_z = pos[e, 2] + (R20 * kbx + R21 * kby + R22 * kbz)
                    if knee_z < knee_clear:
                        ncoll = ncoll + 1

            if last:
                if pos[e, 2] < base_clear:
                    ncoll = ncoll + 1
                out_collisions[e] = ncoll
                for j in range(12):
                    out_tau[e, j] = tau[j]

            vel[e, 0] += dt * (fs_x / mass[e])
            vel[e, 1] += dt * (fs_y / mass[e])
            vel[e, 2] += dt * (fs_z / mass[e] - grav)
            for k in range(3):
                pos[e, k] += dt * vel[e, k]

            tbx = R00 * tw_x + R10 * tw_y + R20 * tw_z
            tby = R01 * tw_x + R11 * tw_y + R21 * tw_z
            tbz = R02 * tw_x + R12 * tw_y + R22 * tw_z
            angvel[e, 0] += dt * (tbx / bixx)
            angvel[e, 1] += dt * (tby / biyy)
            angvel[e, 2] += dt * (tbz / bizz)
            for k in range(3):
                rpy[e, k] += dt * angvel[e, k]

        for leg in range(4):
            for k in range(3):
                out_fmean[e, leg, k] = facc[leg][k] / n_substeps
        out_tau_sq[e] = tausq_acc / n_substeps

        bad = False
        maxqd = 0.0
        for j in range(12):
            if not (isfinite(q[e, j]) and isfinite(qd[e, j])):
                bad = True
            if fabs(qd[e, j]) > maxqd:
                maxqd = fabs(qd[e, j])
        maxv = 0.0
        for k in range(3):
            if not (isfinite(pos[e, k]) and isfinite(rpy[e, k]) and isfinite(vel[e, k]) and isfinite(angvel[e, k])):
                bad = True
            if fabs(vel[e, k]) > maxv:
                maxv = fabs(vel[e, k])
        if not (maxqd < 1e4 and maxv < 1e3 and fabs(pos[e, 2]) < 10.0):
            bad = True

        if bad:
            for j in range(12):
                q[e, j] = eq[j]
                qd[e, j] = eqd[j]
            for k in range(3):
                pos[e, k] = epos[k]
                rpy[e, k] = erpy[k]
                vel[e, k] = evel[k]
                angvel[e, k] = eang[k]
            out_diverged[e] = 1
        else:
            out_diverged[e] = 0
