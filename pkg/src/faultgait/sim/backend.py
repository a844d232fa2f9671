"""Kernel backend selection.

The compiled Cython kernel is preferred when the extension built; the numpy
kernel is the always-available fallback. Both expose the same step_envs and
produce bit-identical trajectories. Override with FAULTGAIT_BACKEND=numpy
or FAULTGAIT_BACKEND=compiled.
"""

import os

from . import kernel_py

_BACKENDS = {"numpy": kernel_py}
try:
    from . import _kernel as _compiled

    _BACKENDS["compiled"] = _compiled
except ImportError:
    _compiled = None


def available_backends():
    return tuple(sorted(_BACKENDS))


def get_backend(name=None):
    """Resolve a kernel module by name, env var, or default preference."""
    if name is None:
        name = os.environ.get("FAULTGAIT_BACKEND")
    if name is None:
        name = "compiled" if "compiled" in _BACKENDS else "numpy"
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    return _BACKENDS[name]
