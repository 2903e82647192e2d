"""Admissible set K, its Yosida-Moreau regularization and the double-well term.

K is the triangle ``{b1 >= 0, b2 >= 0, b1 + b2 <= 1}``. Everything here is a
pure function; array arguments are treated cellwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .model import ParameterError

VERTICES = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))

# outward unit normals of the three sides: b1 >= 0, b2 >= 0, b1 + b2 <= 1
_NORMALS = ((-1.0, 0.0), (0.0, -1.0), (1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0)))


@dataclass(frozen=True)
class ConstraintSet:
    """The triangle K; ``kind`` is kept for future polytopes."""

    kind: str = "triangle"

    def __post_init__(self):
        if self.kind != "triangle":
            raise ParameterError(f"unsupported constraint set {self.kind!r}")

    def contains(self, b1, b2, tol=0.0):
        b1 = np.asarray(b1)
        b2 = np.asarray(b2)
        return (b1 >= -tol) & (b2 >= -tol) & (b1 + b2 <= 1.0 + tol)


@dataclass(frozen=True)
class YosidaParams:
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ParameterError(f"sigma must be positive, got {self.sigma}")


def _check_finite(b1, b2):
    # the sum is a cheap screen; recheck cellwise only when it overflows
    if not np.isfinite(b1.sum() + b2.sum()) and not (np.isfinite(b1).all() and np.isfinite(b2).all()):
        raise ValueError("cannot project NaN or infinite values onto K")


def project_field(b1, b2):
    """Projection of cellwise pairs onto K; returns two new arrays."""
    b1 = np.ascontiguousarray(b1, dtype=float)
    b2 = np.ascontiguousarray(b2, dtype=float)
    _check_finite(b1, b2)
    o1 = np.empty_like(b1)
    o2 = np.empty_like(b2)
    _backend.kernels.project_triangle(b1.reshape(-1), b2.reshape(-1), o1.reshape(-1), o2.reshape(-1))
    return o1, o2


def project_K(point):
    """Nearest point of K to a pair ``(b1, b2)``."""
    b1, b2 = (float(v) for v in point)
    if math.isnan(b1) or math.isnan(b2):
        raise ValueError("cannot project NaN onto K")
    o1, o2 = project_field(np.array([b1]), np.array([b2]))
    return float(o1[0]), float(o2[0])


def dist_K(b1, b2):
    """Cellwise Euclidean distance to K."""
    q1, q2 = project_field(b1, b2)
    return np.hypot(np.asarray(b1) - q1, np.asarray(b2) - q2)


def _sigma(params) -> float:
    s = params.sigma if isinstance(params, YosidaParams) else float(params)
    if not s > 0:
        raise ParameterError(f"sigma must be positive, got {s}")
    return s


def yosida_field(b1, b2, params):
    """``(b - P_K b) / sigma`` cellwise, the regularized multiplier."""
    s = _sigma(params)
    q1, q2 = project_field(b1, b2)
    return (np.asarray(b1) - q1) / s, (np.asarray(b2) - q2) / s


def yosida_force(beta, params):
    s = _sigma(params)
    q = project_K(beta)
    return ((beta[0] - q[0]) / s, (beta[1] - q[1]) / s)


def phi_sigma_field(b1, b2, params):
    s = _sigma(params)
    return dist_K(b1, b2) ** 2 / (2.0 * s)


def phi_sigma_value(beta, params) -> float:
    """Moreau envelope of the indicator, ``dist(beta, K)^2 / (2 sigma)``."""
    s = _sigma(params)
    q = project_K(beta)
    return ((beta[0] - q[0]) ** 2 + (beta[1] - q[1]) ** 2) / (2.0 * s)


def yosida_resolvent(z1, z2, tau, sigma):
    """Solve ``(b - z) / tau + (b - P_K b) / sigma = 0`` exactly, cellwise.

    The proximal map of ``tau * phi_sigma``: ``z + tau / (tau + sigma) (P_K z - z)``.
    """
    q1, q2 = project_field(z1, z2)
    lam = tau / (tau + sigma)
    return z1 + lam * (q1 - z1), z2 + lam * (q2 - z2)


# ---------------------------------------------------------------------------
# normal cone


def normal_cone_distance(v1, v2, b1, b2, tol=1e-9):
    """Distance of ``v`` to the normal cone of K at ``b`` (``b`` taken in K).

    Exact case analysis: interior (cone {0}), edge (a ray), vertex (a wedge).
    """
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    b1 = np.asarray(b1, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    active = (b1 <= tol, b2 <= tol, b1 + b2 >= 1.0 - tol)
    dist = np.hypot(v1, v2)
    for act, (n1, n2) in zip(active, _NORMALS):
        s = v1 * n1 + v2 * n2
        cand = np.hypot(v1 - s * n1, v2 - s * n2)
        dist = np.where(act & (s > 0), np.minimum(dist, cand), dist)
    for i, j in ((0, 1), (1, 2), (0, 2)):
        (a1, a2), (c1, c2) = _NORMALS[i], _NORMALS[j]
        det = a1 * c2 - a2 * c1
        x = (v1 * c2 - v2 * c1) / det
        y = (a1 * v2 - a2 * v1) / det
        inside = active[i] & active[j] & (x >= 0) & (y >= 0)
        dist = np.where(inside, 0.0, dist)
    return dist


# ---------------------------------------------------------------------------
# optional smooth non-convex part


@dataclass(frozen=True)
class DoubleWell:
    """``scale * (W(b1) + W(b2))`` with polynomial ``W``, default ``s^2 (1 - s)^2``.

    ``coeffs`` are in increasing degree.
    """

    scale: float = 1.0
    coeffs: tuple = field(default=(0.0, 0.0, 1.0, -2.0, 1.0))

    @property
    def poly(self):
        return np.polynomial.Polynomial(self.coeffs)

    def value(self, b1, b2):
        W = self.poly
        return self.scale * (W(np.asarray(b1)) + W(np.asarray(b2)))

    def grad(self, b1, b2):
        dW = self.poly.deriv()
        return self.scale * dW(np.asarray(b1, dtype=float)), self.scale * dW(np.asarray(b2, dtype=float))


def double_well_grad(beta, well: DoubleWell | None = None):
    well = well or DoubleWell()
    g1, g2 = well.grad(beta[0], beta[1])
    return float(g1), float(g2)
