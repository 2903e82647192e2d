"""Truncated exponential ``theta = gamma_sigma(w)``, its primitive and its inverse.

``gamma_sigma(r) = exp(r)`` up to ``cap`` and continues with the tangent line
beyond, so it is C1, increasing and Lipschitz with constant ``exp(cap)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ParameterError

DEFAULT_CAP = 30.0


@dataclass(frozen=True)
class GammaSigma:
    cap: float = DEFAULT_CAP

    def __post_init__(self):
        if not (self.cap > 0 and math.isfinite(self.cap)):
            raise ParameterError(f"gamma cap must be positive, got {self.cap}")


def _cap(g) -> float:
    if isinstance(g, GammaSigma):
        return g.cap
    g = float(g)
    if not (g > 0 and math.isfinite(g)):
        raise ParameterError(f"gamma cap must be positive, got {g}")
    return g


def gamma_sigma(w, g=DEFAULT_CAP):
    c = _cap(g)
    w = np.asarray(w, dtype=float)
    if w.ndim and w.max() <= c:
        return np.exp(w)
    out = np.exp(np.minimum(w, c)) * (1.0 + np.maximum(w - c, 0.0))
    return out if out.ndim else float(out)


def gamma_sigma_prime(w, g=DEFAULT_CAP):
    c = _cap(g)
    w = np.asarray(w, dtype=float)
    out = np.exp(np.minimum(w, c))
    return out if out.ndim else float(out)


def gamma_sigma_primitive(w, g=DEFAULT_CAP):
    """``1 + int_0^w gamma_sigma``; equals ``exp(w)`` below the cap."""
    c = _cap(g)
    w = np.asarray(w, dtype=float)
    d = np.maximum(w - c, 0.0)
    out = np.exp(np.minimum(w, c)) * (1.0 + d + 0.5 * d * d)
    return out if out.ndim else float(out)


def delta_sigma(theta, g=DEFAULT_CAP):
    """Inverse of ``gamma_sigma``, defined for ``theta > 0``."""
    c = _cap(g)
    theta = np.asarray(theta, dtype=float)
    if np.any(~(theta > 0)):
        raise ValueError("delta_sigma is defined only for positive temperature")
    ec = math.exp(c)
    out = np.where(theta <= ec, np.log(np.minimum(theta, ec)), c + theta / ec - 1.0)
    return out if out.ndim else float(out)
