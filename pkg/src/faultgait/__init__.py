"""Degradation-aware quadruped locomotion on a reduced-order surrogate.

Pipeline: PPO teachers conditioned on a per-joint torque attenuation rate,
a causal-transformer student distilled from them, baseline policies, and a
fault-grid evaluation harness emitting CSV artifacts.
"""

__version__ = "0.1.0"
