"""Canonical joint ordering and naming for the 12-DoF quadruped.

Order follows the Unitree SDK convention: legs FR, FL, RR, RL, and within
each leg hip (abduction), thigh, calf. Every 12-vector in the package
(joint positions, velocities, torques, degradation rates, actions) uses
this order. Heatmap rows, CSV rows and CLI joint arguments use the short
names below.
"""

# leg index -> name, in canonical order
LEG_NAMES = ("FR", "FL", "RR", "RL")

# joint-within-leg index -> name
JOINT_KINDS = ("hip", "thigh", "calf")

N_JOINTS = 12
N_LEGS = 4

# short names in canonical order: FRH FRT FRC FLH FLT FLC RRH RRT RRC RLH RLT RLC
JOINT_NAMES = tuple(f"{leg}{kind[0].upper()}" for leg in LEG_NAMES for kind in JOINT_KINDS)

# long names, e.g. "FR_calf"
JOINT_LONG_NAMES = tuple(f"{leg}_{kind}" for leg in LEG_NAMES for kind in JOINT_KINDS)

# Positional aliases of the form <side><end><joint>, e.g. RFC = right front
# calf. These appear in fault scenario files and on the CLI.
_SIDE = {"FR": "RF", "FL": "LF", "RR": "RH", "RL": "LH"}
_ALT_SIDE = {"FR": "FR", "FL": "FL", "RR": "RR", "RL": "RL"}


def _build_alias_table():
    table = {}
    for idx, (leg, kind) in enumerate((l, k) for l in LEG_NAMES for k in JOINT_KINDS):
        names = {
            JOINT_NAMES[idx],
            JOINT_LONG_NAMES[idx],
            f"{_SIDE[leg]}{kind[0].upper()}",  # RFC, LFC, RHC, LHC ...
            f"{_SIDE[leg]}_{kind}",
        }
        for name in names:
            table[name.upper()] = idx
    return table


_ALIASES = _build_alias_table()


def joint_index(name):
    """Resolve a joint given an index, short name, long name or side alias.

    Accepts e.g. 2, "2", "FRC", "FR_calf", "RFC", "rfc". Raises ValueError
    for anything unrecognised.
    """
    if isinstance(name, int):
        idx = name
    else:
        text = str(name).strip()
        if text.lstrip("-").isdigit():
            idx = int(text)
        else:
            key = text.upper().replace("-", "_")
            if key not in _ALIASES:
                raise ValueError(f"unknown joint {name!r}; expected one of {JOINT_NAMES} or an index 0..11")
            return _ALIASES[key]
    if not 0 <= idx < N_JOINTS:
        raise ValueError(f"joint index {idx} out of range 0..11")
    return idx


def leg_of_joint(idx):
    """Leg index (0..3) owning joint idx."""
    return idx // 3


def kind_of_joint(idx):
    """0 = hip abduction, 1 = thigh, 2 = calf."""
    return idx % 3


CALF_INDICES = tuple(i for i in range(N_JOINTS) if kind_of_joint(i) == 2)
THIGH_INDICES = tuple(i for i in range(N_JOINTS) if kind_of_joint(i) == 1)
HIP_INDICES = tuple(i for i in range(N_JOINTS) if kind_of_joint(i) == 0)
