"""Actuator degradation: rate vectors, attenuation, and the sampling schedule.

A degradation rate d in [0, 1] scales a joint's applied torque by (1 - d);
d = 0 is a healthy joint, d = 1 a total failure. Training varies one
active joint per scenario. The schedule is a random walk biased toward
failure: at every control step the rate jumps up to a uniform value in
[d, 1) with small probability, resets to [0, 0.5) once it has effectively
saturated, and holds otherwise. Evaluation uses step-function scenarios
(healthy until an onset step, then fixed rates on the affected joints).
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .joints import N_JOINTS, joint_index


def check_rates(d):
    """Validate and return a degradation vector as a float array."""
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (N_JOINTS,):
        raise ValueError(f"degradation vector must have shape ({N_JOINTS},), got {d.shape}")
    if not (np.isfinite(d).all() and (d >= 0.0).all() and (d <= 1.0).all()):
        raise ValueError("degradation rates must lie in [0, 1]")
    return d


def apply_degradation(tau_desired, d):
    """Attenuate desired joint torques elementwise by (1 - d)."""
    d = check_rates(d)
    return np.asarray(tau_desired, dtype=np.float64) * (1.0 - d)


@dataclass(frozen=True)
class ScheduleParams:
    """Adaptive schedule constants: jump probability and saturation reset."""

    p: float = 0.02
    delta: float = 1e-4
    active_joint: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must be in [0, 1]")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")


def schedule_step(d_prev, rng, params):
    """Advance one rate by one control step.

    Branches, in order: with probability p jump to U(d_prev, 1); else if
    d_prev has saturated (d_prev > 1 - delta) reset to U(0, 0.5); else
    hold. Always consumes exactly two uniforms so the scalar and batched
    paths stay stream-compatible.
    """
    u_branch = rng.random()
    u_value = rng.random()
    if u_branch < params.p:
        return d_prev + u_value * (1.0 - d_prev)
    if d_prev > 1.0 - params.delta:
        return 0.5 * u_value
    return d_prev


def schedule_step_batch(d_prev, rng, params):
    """Vectorized schedule_step over a batch of independent rates.

    Consumes exactly 2 uniforms per element; with a length-1 array this
    reproduces schedule_step on the same generator state.
    """
    d_prev = np.asarray(d_prev, dtype=np.float64)
    n = d_prev.shape[0]
    u_branch = rng.random(n)
    u_value = rng.random(n)
    jump = u_branch < params.p
    reset = ~jump & (d_prev > 1.0 - params.delta)
    out = np.where(jump, d_prev + u_value * (1.0 - d_prev), d_prev)
    return np.where(reset, 0.5 * u_value, out)


def sample_initial(rng, active_joint):
    """Fresh scenario vector: the active joint uniform in [0, 1), rest 0."""
    idx = joint_index(active_joint)
    d = np.zeros(N_JOINTS)
    d[idx] = rng.random()
    return d


@dataclass(frozen=True)
class FaultScenario:
    """Step-function fault: zero rates until onset, then fixed rates."""

    affected_joints: tuple = ()  # ((joint index, rate), ...)
    onset_step: int = 0

    def __post_init__(self):
        joints = tuple((joint_index(j), float(r)) for j, r in self.affected_joints)
        object.__setattr__(self, "affected_joints", joints)
        seen = [j for j, _ in joints]
        if len(set(seen)) != len(seen):
            raise ValueError("scenario lists a joint twice")
        if any(not 0.0 <= r <= 1.0 for _, r in joints):
            raise ValueError("scenario rates must lie in [0, 1]")
        if self.onset_step < 0:
            raise ValueError("onset_step must be >= 0")

    def to_json(self):
        return json.dumps(
            {"affected_joints": [[j, r] for j, r in self.affected_joints],
             "onset_step": self.onset_step},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        return cls(
            affected_joints=tuple((j, r) for j, r in raw["affected_joints"]),
            onset_step=int(raw["onset_step"]),
        )


def scenario_degradation(scenario, t):
    """Degradation vector for timestep t under a step-function scenario."""
    d = np.zeros(N_JOINTS)
    if t >= scenario.onset_step:
        for j, r in scenario.affected_joints:
            d[j] = r
    return d


def single_fault(joint, rate, onset_step=0):
    return FaultScenario(affected_joints=((joint, rate),), onset_step=onset_step)


def multi_fault(joint_rates, onset_step=0):
    return FaultScenario(affected_joints=tuple(joint_rates), onset_step=onset_step)


def all_joints_fault(rate, onset_step=0):
    return FaultScenario(
        affected_joints=tuple((j, rate) for j in range(N_JOINTS)),
        onset_step=onset_step,
    )
