"""Vectorized environment over the control-step kernel.

VecEnv owns the state of n environments as structure-of-arrays and steps
them in lockstep. Degradation is an input owned by the caller (training
and evaluation loops drive their own schedules); the env applies whatever
is in self.degradation each step. Finished environments are masked out via
self.active and their state freezes.

Observation layout (48): body-frame linear velocity (3), body-frame angular
velocity (3), unit gravity in body frame (3), command (3), joint positions
(12), joint velocities (12), previous action in action units (12). Raw,
unscaled; models apply their own fixed scaling.
"""

from dataclasses import dataclass

import numpy as np

from ..joints import N_JOINTS, N_LEGS
from .backend import get_backend
from .config import Command, RandomizationConfig, SimConfig, randomize_domain, sample_command
from .kernel_layout import pack_config

OBS_DIM = 48


class SimulationDiverged(RuntimeError):
    """The integrator produced a non-finite or exploding state."""


@dataclass
class RobotState:
    """Single-env state snapshot."""

    q: np.ndarray                  # (12,) joint positions (rad)
    qd: np.ndarray                 # (12,) joint velocities (rad/s)
    base_pos: np.ndarray           # (3,) world position of the trunk (m)
    base_rpy: np.ndarray           # (3,) roll, pitch, yaw (rad)
    base_lin_vel: np.ndarray       # (3,) world-frame velocity (m/s)
    base_ang_vel: np.ndarray       # (3,) body-frame angular rates (rad/s)
    foot_contacts: np.ndarray      # (4,) bool
    foot_forces: np.ndarray        # (4,) normal force, >= 0 (N)


@dataclass
class StepInfo:
    """Single-env step outputs; the batched equivalents live in StepBatch."""

    observation: np.ndarray
    fall: bool
    diverged: bool
    foot_contacts: np.ndarray      # (4,) bool
    foot_forces: np.ndarray        # (4,3) mean world-frame contact force
    applied_torque: np.ndarray     # (12,) last-substep torque after attenuation
    torque_sq: float               # mean over substeps of sum tau^2
    collisions: int                # calf/trunk ground contacts
    air_reward: float              # sum over feet of (air time - 0.5) at touchdown
    v_body: np.ndarray
    w_body: np.ndarray
    g_body: np.ndarray
    qd: np.ndarray
    qd_prev: np.ndarray
    action: np.ndarray             # (12,) clipped action, action units
    prev_action: np.ndarray


@dataclass
class StepBatch:
    obs: np.ndarray
    fall: np.ndarray
    diverged: np.ndarray
    contacts: np.ndarray
    foot_forces: np.ndarray
    normal_forces: np.ndarray
    applied_torque: np.ndarray
    torque_sq: np.ndarray
    collisions: np.ndarray
    air_reward: np.ndarray
    v_body: np.ndarray
    w_body: np.ndarray
    g_body: np.ndarray
    qd: np.ndarray
    qd_prev: np.ndarray
    action: np.ndarray
    prev_action: np.ndarray


def _body_rotation(rpy):
    """Batched body-to-world rotation components, each (n,)."""
    cr, sr = np.cos(rpy[:, 0]), np.sin(rpy[:, 0])
    cp, sp = np.cos(rpy[:, 1]), np.sin(rpy[:, 1])
    cy, sy = np.cos(rpy[:, 2]), np.sin(rpy[:, 2])
    return (
        cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
        sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
        -sp, cp * sr, cp * cr,
    )


class VecEnv:
    def __init__(self, n_envs, sim_cfg=None, rand_cfg=None, seed=0, backend=None):
        self.cfg = sim_cfg or SimConfig()
        self.rand = rand_cfg if rand_cfg is not None else RandomizationConfig()
        self.kernel = get_backend(backend)
        self.n = n_envs
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self.rngs = [np.random.default_rng(s) for s in seq.spawn(n_envs)]

        self._cfg_vec = pack_config(self.cfg)
        self._limit_low = np.asarray(self.cfg.joint_limit_low, dtype=np.float64)
        self._limit_high = np.asarray(self.cfg.joint_limit_high, dtype=np.float64)
        self._nominal = np.asarray(self.cfg.nominal_pose, dtype=np.float64)
        self._base_hips = self.cfg.hip_offsets()

        n = n_envs
        self.q = np.tile(self._nominal, (n, 1))
        self.qd = np.zeros((n, N_JOINTS))
        self.pos = np.zeros((n, 3))
        self.pos[:, 2] = self.cfg.standing_height()
        self.rpy = np.zeros((n, 3))
        self.vel = np.zeros((n, 3))
        self.angvel = np.zeros((n, 3))

        self.hips = np.tile(self._base_hips, (n, 1, 1))
        self.jinertia = np.full((n, N_JOINTS), self.cfg.joint_inertia)
        self.motor = np.ones((n, N_JOINTS))
        self.kp = np.full(n, self.cfg.kp)
        self.kd = np.full(n, self.cfg.kd)
        self.mass = np.full(n, self.cfg.base_mass)
        self.c_norm = np.full(n, self.cfg.contact_damping)
        self.c_tan = np.full(n, self.cfg.tangential_damping)

        self.command = np.zeros((n, 3))
        self.command[:, 0] = 0.5
        self.degradation = np.zeros((n, N_JOINTS))
        self.active = np.ones(n, dtype=np.uint8)
        self.prev_action = np.zeros((n, N_JOINTS))
        self.air_time = np.zeros((n, N_LEGS))
        self.episode_step = np.zeros(n, dtype=np.int64)

        self._out_contact = np.zeros((n, N_LEGS), dtype=np.uint8)
        self._out_fz = np.zeros((n, N_LEGS))
        self._out_fmean = np.zeros((n, N_LEGS, 3))
        self._out_tau_sq = np.zeros(n)
        self._out_tau = np.zeros((n, N_JOINTS))
        self._out_coll = np.zeros(n, dtype=np.int32)
        self._out_div = np.zeros(n, dtype=np.uint8)

    # -- domain handling ----------------------------------------------------

    def set_domain(self, idx, dom):
        self.hips[idx] = self._base_hips - np.asarray(dom.com_offset, dtype=np.float64)
        self.jinertia[idx] = self.cfg.joint_inertia * np.asarray(dom.link_mass_scale)
        self.motor[idx] = np.asarray(dom.motor_strength)
        self.kp[idx] = dom.kp
        self.kd[idx] = dom.kd
        self.mass[idx] = self.cfg.base_mass + dom.payload_mass
        # restitution trades away normal damping: bouncier ground dissipates less
        self.c_norm[idx] = self.cfg.contact_damping * (1.0 - 0.6 * dom.restitution)
        self.c_tan[idx] = self.cfg.tangential_damping * dom.friction

    # -- resets --------------------------------------------------------------

    def reset_envs(self, indices, commands=None, domains=None, level=1.0):
        indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
        if indices.size == 0:
            return
        for pos_i, idx in enumerate(indices):
            rng = self.rngs[idx]
            dom = domains[pos_i] if domains is not None else randomize_domain(rng, self.rand)
            cmd = commands[pos_i] if commands is not None else sample_command(rng, level)
            self.set_domain(idx, dom)
            self.command[idx] = cmd.as_array()
            self.q[idx] = self._nominal + rng.uniform(-0.05, 0.05, N_JOINTS)
            self.qd[idx] = 0.0
            self.pos[idx] = (0.0, 0.0, self.cfg.standing_height() + 0.003)
            self.rpy[idx] = (rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03), 0.0)
            self.vel[idx] = 0.0
            self.angvel[idx] = 0.0
            self.degradation[idx] = 0.0
            self.prev_action[idx] = 0.0
            self.air_time[idx] = 0.0
            self.episode_step[idx] = 0
            self.active[idx] = 1
        self._settle(indices)

    def _settle(self, indices):
        """Run the kernel briefly with the nominal target to seat the feet."""
        saved_active = self.active.copy()
        saved_degr = self.degradation[indices].copy()
        self.active[:] = 0
        self.active[indices] = 1
        self.degradation[indices] = 0.0
        target = np.tile(self._nominal, (self.n, 1))
        self.kernel.step_envs(
            self._cfg_vec, self.hips, self._limit_low, self._limit_high,
            self.jinertia, self.motor, self.kp, self.kd, self.mass,
            self.c_norm, self.c_tan,
            self.q, self.qd, self.pos, self.rpy, self.vel, self.angvel,
            target, self.degradation, self.active, self.cfg.settle_steps,
            self._out_contact, self._out_fz, self._out_fmean,
            self._out_tau_sq, self._out_tau, self._out_coll, self._out_div,
        )
        self.active[:] = saved_active
        self.active[indices] = 1
        self.degradation[indices] = saved_degr

    # -- stepping ------------------------------------------------------------

    def targets_from_actions(self, actions):
        a = np.clip(actions, -self.cfg.action_clip, self.cfg.action_clip)
        return self._nominal + self.cfg.action_scale * a, a

    def step(self, actions):
        """Advance active envs one control step; returns a StepBatch."""
        target, actions = self.targets_from_actions(np.asarray(actions, dtype=np.float64))
        qd_prev = self.qd.copy()
        prev_action = self.prev_action.copy()

        self.kernel.step_envs(
            self._cfg_vec, self.hips, self._limit_low, self._limit_high,
            self.jinertia, self.motor, self.kp, self.kd, self.mass,
            self.c_norm, self.c_tan,
            self.q, self.qd, self.pos, self.rpy, self.vel, self.angvel,
            target, self.degradation, self.active, self.cfg.decimation,
            self._out_contact, self._out_fz, self._out_fmean,
            self._out_tau_sq, self._out_tau, self._out_coll, self._out_div,
        )
        act_mask = self.active != 0
        self.episode_step[act_mask] += 1
        self.prev_action[act_mask] = actions[act_mask]

        diverged = (self._out_div != 0) & act_mask
        fall = (
            (np.abs(self.rpy[:, 0]) > self.cfg.fall_roll)
            | (np.abs(self.rpy[:, 1]) > self.cfg.fall_pitch)
            | (self.pos[:, 2] < self.cfg.fall_height)
            | diverged
        ) & act_mask

        contacts = self._out_contact != 0
        # air-time bookkeeping: reward lands on the first stance step
        first_contact = (self.air_time > 0.0) & contacts
        self.air_time[act_mask] += self.cfg.control_dt()
        air_reward = np.sum((self.air_time - 0.5) * first_contact, axis=1)
        self.air_time[contacts] = 0.0

        obs, v_body, g_body = self._observe()
        return StepBatch(
            obs=obs,
            fall=fall,
            diverged=diverged,
            contacts=contacts,
            foot_forces=self._out_fmean.copy(),
            normal_forces=self._out_fz.copy(),
            applied_torque=self._out_tau.copy(),
            torque_sq=self._out_tau_sq.copy(),
            collisions=self._out_coll.copy(),
            air_reward=air_reward,
            v_body=v_body,
            w_body=self.angvel.copy(),
            g_body=g_body,
            qd=self.qd.copy(),
            qd_prev=qd_prev,
            action=actions,
            prev_action=prev_action,
        )

    def _observe(self):
        R00, R01, R02, R10, R11, R12, R20, R21, R22 = _body_rotation(self.rpy)
        vx, vy, vz = self.vel[:, 0], self.vel[:, 1], self.vel[:, 2]
        v_body = np.stack(
            [R00 * vx + R10 * vy + R20 * vz,
             R01 * vx + R11 * vy + R21 * vz,
             R02 * vx + R12 * vy + R22 * vz], axis=1
        )
        g_body = np.stack([-R20, -R21, -R22], axis=1)
        obs = np.concatenate(
            [v_body, self.angvel, g_body, self.command, self.q, self.qd, self.prev_action],
            axis=1,
        )
        return obs, v_body, g_body

    def observations(self):
        return self._observe()[0]

    def get_state(self, idx):
        return RobotState(
            q=self.q[idx].copy(),
            qd=self.qd[idx].copy(),
            base_pos=self.pos[idx].copy(),
            base_rpy=self.rpy[idx].copy(),
            base_lin_vel=self.vel[idx].copy(),
            base_ang_vel=self.angvel[idx].copy(),
            foot_contacts=self._out_contact[idx] != 0,
            foot_forces=self._out_fz[idx].copy(),
        )


class Env:
    """Single-environment convenience wrapper; raises on divergence."""

    def __init__(self, sim_cfg=None, rand_cfg=None, seed=0, backend=None):
        self.vec = VecEnv(1, sim_cfg=sim_cfg, rand_cfg=rand_cfg, seed=seed, backend=backend)

    @property
    def cfg(self):
        return self.vec.cfg

    def reset(self, command=None, domain=None, level=1.0):
        self.vec.reset_envs(
            [0],
            commands=[command] if command is not None else None,
            domains=[domain] if domain is not None else None,
            level=level,
        )
        return self.vec.observations()[0]

    def set_degradation(self, d):
        self.vec.degradation[0] = np.asarray(d, dtype=np.float64)

    def step(self, action):
        batch = self.vec.step(np.asarray(action, dtype=np.float64)[None, :])
        if batch.diverged[0]:
            raise SimulationDiverged("physics state went non-finite; inspect inputs")
        return StepInfo(
            observation=batch.obs[0],
            fall=bool(batch.fall[0]),
            diverged=False,
            foot_contacts=batch.contacts[0],
            foot_forces=batch.foot_forces[0],
            applied_torque=batch.applied_torque[0],
            torque_sq=float(batch.torque_sq[0]),
            collisions=int(batch.collisions[0]),
            air_reward=float(batch.air_reward[0]),
            v_body=batch.v_body[0],
            w_body=batch.w_body[0],
            g_body=batch.g_body[0],
            qd=batch.qd[0],
            qd_prev=batch.qd_prev[0],
            action=batch.action[0],
            prev_action=batch.prev_action[0],
        )

    @property
    def state(self):
        return self.vec.get_state(0)
