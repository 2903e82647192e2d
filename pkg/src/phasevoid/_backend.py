"""Kernel backend selection.

The compiled kernels are used when importable; ``PHASEVOID_BACKEND=python``
forces the numpy fallback. ``set_backend`` switches at runtime (benchmarks,
parity tests).
"""
import logging
import os

from . import _kernels_py

log = logging.getLogger(__name__)

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_AVAILABLE = {"python": _kernels_py}
if _ckernels is not None:
    _AVAILABLE["cython"] = _ckernels

kernels = _kernels_py


def available():
    return sorted(_AVAILABLE)


def set_backend(name):
    """Select ``"python"``, ``"cython"`` or ``"auto"``; returns the active name."""
    global kernels
    if name == "auto":
        name = "cython" if "cython" in _AVAILABLE else "python"
    if name not in _AVAILABLE:
        raise ValueError(f"backend {name!r} not available (have {available()})")
    kernels = _AVAILABLE[name]
    return kernels.NAME


def current():
    return kernels.NAME


set_backend(os.environ.get("PHASEVOID_BACKEND", "auto"))
log.debug("phasevoid kernel backend: %s", kernels.NAME)
