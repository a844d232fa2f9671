"""Fixed observation scaling shared by every policy network.

The env reports raw physical units; networks see a scaled copy so each
block lands near unit range. Scales are constants rather than learned
statistics, which keeps checkpoints portable across training runs.
"""

import numpy as np

from .sim.config import NOMINAL_POSE
from .sim.env import OBS_DIM


def _build_scaling():
    # layout: [v(3) w(3) g(3) cmd(3) q(12) qd(12) prev_action(12)]
    scale = np.ones(OBS_DIM)
    scale[0:3] = 2.0                 # base velocity, ~0.5 m/s nominal
    scale[3:6] = 0.25                # angular rates
    scale[9:12] = (2.0, 2.0, 0.25)   # command mirrors the velocity scales
    scale[24:36] = 0.05              # joint velocities reach tens of rad/s
    scale[36:48] = 0.25              # actions are clipped to +-4 units
    offset = np.zeros(OBS_DIM)
    offset[12:24] = NOMINAL_POSE     # joint positions about the standing pose
    return offset, scale


OBS_OFFSET, OBS_SCALE = _build_scaling()


def scale_obs(obs):
    """Scaled copy of raw observations; broadcasts over leading axes."""
    return (np.asarray(obs) - OBS_OFFSET) * OBS_SCALE
