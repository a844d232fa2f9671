from .config import Command, DomainParams, RandomizationConfig, SimConfig, randomize_domain, sample_command
from .env import OBS_DIM, Env, RobotState, SimulationDiverged, StepBatch, StepInfo, VecEnv
from .gait import GAIT_PERIOD, expert_state_sequence, reference_gait

__all__ = [
    "Command",
    "DomainParams",
    "RandomizationConfig",
    "SimConfig",
    "randomize_domain",
    "sample_command",
    "OBS_DIM",
    "Env",
    "RobotState",
    "SimulationDiverged",
    "StepBatch",
    "StepInfo",
    "VecEnv",
    "GAIT_PERIOD",
    "expert_state_sequence",
    "reference_gait",
]
