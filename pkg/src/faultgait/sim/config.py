"""Configuration types for the reduced-order quadruped surrogate.

The surrogate models the trunk as a single rigid body with four massless
two-segment legs. Feet interact with flat ground through a unilateral
spring-damper normal force and viscous tangential friction. Joints carry a
small reflected inertia so PD torques produce finite accelerations.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from ..joints import N_JOINTS

# nominal standing pose, per leg: hip abduction, thigh, calf (radians)
NOMINAL_POSE = (0.0, 0.8, -1.5) * 4

# joint limits per leg joint kind
_LIMITS_LOW = (-0.8, -1.0, -2.7) * 4
_LIMITS_HIGH = (0.8, 3.0, -0.9) * 4


def _tuple_field(values):
    return field(default_factory=lambda: tuple(values))


@dataclass
class SimConfig:
    """Physical and integration constants. Defaults model an A1-sized robot."""

    dt: float = 0.005                # physics substep (s)
    decimation: int = 4              # substeps per control step (50 Hz policy)
    gravity: float = 9.81
    base_mass: float = 12.0         # trunk mass (kg); legs are massless
    base_inertia: tuple = (0.12, 0.35, 0.40)  # diagonal, body frame (kg m^2)
    l1: float = 0.2                  # thigh length (m)
    l2: float = 0.2                  # calf length (m)
    hip_x: float = 0.18              # hip fore/aft offset from trunk centre
    hip_y: float = 0.13              # hip lateral offset
    contact_stiffness: float = 2.0e4     # normal spring (N/m)
    contact_damping: float = 200.0       # normal damper (N s/m), scaled by restitution
    tangential_damping: float = 120.0    # viscous friction (N s/m), scaled by friction
    joint_inertia: float = 0.05     # reflected inertia per joint (kg m^2)
    joint_damping: float = 0.1      # joint viscous damping (N m s)
    torque_limit: float = 33.5      # actuator saturation (N m)
    kp: float = 28.0                # nominal PD gains; randomization scales them
    kd: float = 0.7
    action_scale: float = 0.25      # radians of joint target per action unit
    action_clip: float = 4.0        # actions clipped to +-this many units
    nominal_pose: tuple = _tuple_field(NOMINAL_POSE)
    joint_limit_low: tuple = _tuple_field(_LIMITS_LOW)
    joint_limit_high: tuple = _tuple_field(_LIMITS_HIGH)
    fall_roll: float = 0.8          # |roll| above this is a fall (rad)
    fall_pitch: float = 0.8
    fall_height: float = 0.12       # base below this is a fall (m)
    base_clearance: float = 0.08    # base below this counts as ground collision
    knee_clearance: float = 0.02    # knee below this counts as calf collision
    settle_steps: int = 40          # substeps run after reset to seat the feet
    episode_length_s: float = 10.0  # training episode timeout

    def control_dt(self):
        return self.dt * self.decimation

    def max_episode_steps(self):
        return int(round(self.episode_length_s / self.control_dt()))

    def hip_offsets(self):
        """(4,3) hip positions in the trunk frame, leg order FR FL RR RL."""
        x, y = self.hip_x, self.hip_y
        return np.array(
            [[x, -y, 0.0], [x, y, 0.0], [-x, -y, 0.0], [-x, y, 0.0]], dtype=np.float64
        )

    def standing_height(self):
        """Trunk height with feet just touching ground at the nominal pose."""
        thigh, calf = self.nominal_pose[1], self.nominal_pose[2]
        return self.l1 * np.cos(thigh) + self.l2 * np.cos(thigh + calf)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class DomainParams:
    """Per-episode randomized physical parameters."""

    friction: float = 1.0             # scales tangential damping
    restitution: float = 0.0          # 1 = bouncy ground (less normal damping)
    payload_mass: float = 0.0         # added trunk mass (kg)
    link_mass_scale: tuple = _tuple_field((1.0,) * N_JOINTS)  # scales joint inertia
    com_offset: tuple = (0.0, 0.0, 0.0)
    kp: float = 28.0
    kd: float = 0.7
    motor_strength: tuple = _tuple_field((1.0,) * N_JOINTS)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class RandomizationConfig:
    """Sampling ranges for DomainParams (uniform per episode)."""

    friction: tuple = (0.05, 2.75)
    restitution: tuple = (0.0, 1.0)
    payload_mass: tuple = (-1.0, 2.0)
    link_mass_scale: tuple = (0.8, 1.2)
    com_offset: tuple = (-0.05, 0.05)
    kp: tuple = (22.4, 33.6)
    kd: tuple = (0.56, 0.84)
    motor_strength: tuple = (0.8, 1.2)
    enabled: bool = True

    def to_dict(self):
        return dataclasses.asdict(self)


def scaled_randomization(ranges=None, level=1.0):
    """Ranges shrunk toward the nominal physics point.

    level 0 collapses every range onto the DomainParams defaults, level 1
    returns the full ranges; used to ease domains in together with the
    command curriculum when training at small environment counts.
    """
    r = ranges or RandomizationConfig()
    s = min(max(float(level), 0.0), 1.0)
    nominal = DomainParams()

    def lerp(bounds, anchor):
        return (anchor + s * (bounds[0] - anchor), anchor + s * (bounds[1] - anchor))

    return RandomizationConfig(
        friction=lerp(r.friction, nominal.friction),
        restitution=lerp(r.restitution, nominal.restitution),
        payload_mass=lerp(r.payload_mass, nominal.payload_mass),
        link_mass_scale=lerp(r.link_mass_scale, 1.0),
        com_offset=lerp(r.com_offset, 0.0),
        kp=lerp(r.kp, nominal.kp),
        kd=lerp(r.kd, nominal.kd),
        motor_strength=lerp(r.motor_strength, 1.0),
        enabled=r.enabled,
    )


def randomize_domain(rng, ranges=None):
    """Draw DomainParams from the configured uniform ranges."""
    r = ranges or RandomizationConfig()
    if not r.enabled:
        return DomainParams()
    u = rng.uniform
    return DomainParams(
        friction=u(*r.friction),
        restitution=u(*r.restitution),
        payload_mass=u(*r.payload_mass),
        link_mass_scale=tuple(u(*r.link_mass_scale, size=N_JOINTS)),
        com_offset=tuple(u(*r.com_offset, size=3)),
        kp=u(*r.kp),
        kd=u(*r.kd),
        motor_strength=tuple(u(*r.motor_strength, size=N_JOINTS)),
    )


@dataclass
class Command:
    """Velocity command held fixed for an episode (body frame)."""

    vx: float = 0.5      # forward (m/s)
    vy: float = 0.0      # lateral, unused by the sampler but kept in the obs
    yaw_rate: float = 0.0

    def as_array(self):
        return np.array([self.vx, self.vy, self.yaw_rate], dtype=np.float64)

    def to_dict(self):
        return dataclasses.asdict(self)


def sample_command(rng, level=1.0):
    """Curriculum-scaled command: vx in [0.2, 0.2 + 0.8 level], yaw in +-0.5 level."""
    level = float(np.clip(level, 0.0, 1.0))
    vx = rng.uniform(0.2, 0.2 + 0.8 * level)
    yaw = rng.uniform(-0.5 * level, 0.5 * level)
    return Command(vx=float(vx), vy=0.0, yaw_rate=float(yaw))
