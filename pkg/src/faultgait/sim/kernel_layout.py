"""Packed scalar-config layout shared by the numpy and compiled kernels."""

CFG_DT = 0
CFG_L1 = 1
CFG_L2 = 2
CFG_CONTACT_K = 3
CFG_TORQUE_LIMIT = 4
CFG_JOINT_DAMPING = 5
CFG_GRAVITY = 6
CFG_BASE_IXX = 7
CFG_BASE_IYY = 8
CFG_BASE_IZZ = 9
CFG_BASE_CLEARANCE = 10
CFG_KNEE_CLEARANCE = 11
N_CFG = 12


def pack_config(sim_cfg):
    """SimConfig -> float64 vector consumed by the kernels."""
    import numpy as np

    cfg = np.zeros(N_CFG, dtype=np.float64)
    cfg[CFG_DT] = sim_cfg.dt
    cfg[CFG_L1] = sim_cfg.l1
    cfg[CFG_L2] = sim_cfg.l2
    cfg[CFG_CONTACT_K] = sim_cfg.contact_stiffness
    cfg[CFG_TORQUE_LIMIT] = sim_cfg.torque_limit
    cfg[CFG_JOINT_DAMPING] = sim_cfg.joint_damping
    cfg[CFG_GRAVITY] = sim_cfg.gravity
    cfg[CFG_BASE_IXX] = sim_cfg.base_inertia[0]
    cfg[CFG_BASE_IYY] = sim_cfg.base_inertia[1]
    cfg[CFG_BASE_IZZ] = sim_cfg.base_inertia[2]
    cfg[CFG_BASE_CLEARANCE] = sim_cfg.base_clearance
    cfg[CFG_KNEE_CLEARANCE] = sim_cfg.knee_clearance
    return cfg
