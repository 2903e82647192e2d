"""Matrix-free diffusion operators ``-c Laplace`` with boundary laws, and the implicit solve.

Cell-centred two-point fluxes. A boundary face with law ``outward flux = r u_cell - s``
adds ``r / h`` to the diagonal of its cell and ``s / h`` to the source, so the
operator is affine: ``A u = L u + D u - S`` with ``L`` the Neumann stencil.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .model import (
    Dirichlet,
    EntropyFlux,
    Grid,
    ParameterError,
    Robin,
    SemiPermeable,
    ThetaRobin,
    Watertight,
    evaluate,
)

DEFAULT_LIN_TOL = 1e-10


class SolverError(RuntimeError):
    """Krylov iteration failed to converge; ``history`` holds the residual norms."""

    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = np.asarray(history)


@dataclass(frozen=True)
class OperatorSpec:
    coefficient: float
    grid: Grid
    bc: object = field(default_factory=Watertight)

    def __post_init__(self):
        if not self.coefficient >= 0:
            raise ParameterError(f"diffusion coefficient must be >= 0, got {self.coefficient}")


@dataclass
class Assembled:
    """Kernel-ready data: stencil weights, boundary diagonal and source, ``(nx, ny)`` layout."""

    cx: float
    cy: float
    diag: np.ndarray
    src: np.ndarray
    face_rate: list  # per side: (axis, end, r array, s array)
    conservative: bool = field(init=False)

    def __post_init__(self):
        self.conservative = not np.any(self.diag)


def _as2d(u):
    u = np.ascontiguousarray(u, dtype=float)
    return u.reshape(u.shape[0], -1) if u.ndim == 1 else u


def _face_law(spec, axis, end, t, lagged, flux):
    """Return ``(r, s)`` on one side so that the outward flux is ``r u - s``."""
    g = spec.grid
    c = spec.coefficient
    h = g.h[axis]
    law = spec.bc
    xs = g.side_coords(axis, end)
    shape = xs[0].shape
    zero = np.zeros(shape)
    if isinstance(law, Watertight) or c == 0.0:
        return zero, zero
    if isinstance(law, Dirichlet):
        r = np.full(shape, 2.0 * c / h)
        return r, r * evaluate(law.ext, xs, t)
    if isinstance(law, (Robin, SemiPermeable)):
        a = law.alpha
        r = np.full(shape, 2.0 * c * a / (2.0 * c + a * h))
        ext = evaluate(law.ext, xs, t)
        if isinstance(law, SemiPermeable):
            if lagged is None:
                raise ValueError("semi-permeable wall needs the lagged pressure iterate")
            inflow = lagged[g.side_index(axis, end)] < ext
            r = np.where(inflow, r, 0.0)
        return r, r * ext
    if isinstance(law, EntropyFlux):
        a = law.alpha
        pi = evaluate(flux, xs, t)
        den = 2.0 * c + a * h
        return np.full(shape, 2.0 * c * a / den), 2.0 * c * pi / den
    if isinstance(law, ThetaRobin):
        if lagged is None:
            raise ValueError("temperature Robin law needs the lagged temperature")
        th = lagged[g.side_index(axis, end)]
        th_ext = evaluate(law.theta_ext, xs, t)
        # c dw/dn = -alpha (1 - theta_ext / theta), frozen at the lagged temperature
        return zero, -law.alpha * (1.0 - th_ext / th)
    raise ParameterError(f"unsupported boundary law {law!r}")


def assemble(spec: OperatorSpec, t=0.0, lagged=None, flux=0.0) -> Assembled:
    """Boundary contributions of ``spec`` at time ``t``.

    ``lagged`` is the previous iterate for the lagged laws (pressure for a
    semi-permeable wall, temperature for ``ThetaRobin``); ``flux`` is the
    entropy boundary datum for ``EntropyFlux``.
    """
    g = spec.grid
    c = spec.coefficient
    diag = np.zeros(g.shape)
    src = np.zeros(g.shape)
    faces = []
    for axis, end in g.sides():
        r, s = _face_law(spec, axis, end, t, lagged, flux)
        h = g.h[axis]
        idx = g.side_index(axis, end)
        diag[idx] += r / h
        src[idx] += s / h
        faces.append((axis, end, r, s))
    hx = g.h[0]
    cy = c / g.h[1] ** 2 if g.dim == 2 else 0.0
    return Assembled(c / hx**2, cy, _as2d(diag), _as2d(src), faces)


def apply(spec: OperatorSpec, u, t=0.0, lagged=None, flux=0.0, assembled=None):
    """``-c Laplace u`` with the boundary law folded in (affine in ``u``)."""
    u = np.asarray(u, dtype=float)
    if u.shape != spec.grid.shape:
        raise ValueError(f"field shape {u.shape} does not match grid {spec.grid.shape}")
    a = assembled or assemble(spec, t, lagged, flux)
    out = np.empty(_as2d(u).shape)
    _backend.kernels.apply_operator(_as2d(u), 0.0, a.cx, a.cy, a.diag, out)
    return (out - a.src).reshape(u.shape)


def apply_linear(spec: OperatorSpec, u, assembled=None):
    """Linear part only, without the boundary source."""
    a = assembled or assemble(spec)
    out = np.empty(_as2d(u).shape)
    _backend.kernels.apply_operator(_as2d(u), 0.0, a.cx, a.cy, a.diag, out)
    return out.reshape(np.shape(u))


def boundary_outflow(spec: OperatorSpec, u, assembled=None, t=0.0, lagged=None, flux=0.0) -> float:
    """Integral of the outward boundary flux ``-c du/dn`` for the discrete solution ``u``."""
    a = assembled or assemble(spec, t, lagged, flux)
    g = spec.grid
    total = 0.0
    for axis, end, r, s in a.face_rate:
        uc = np.asarray(u)[g.side_index(axis, end)]
        total += float(np.sum(r * uc - s)) * g.face_area(axis)
    return total


def solve_implicit(spec: OperatorSpec, mass_coeff, rhs, tol=DEFAULT_LIN_TOL, t=0.0,
                   lagged=None, flux=0.0, x0=None, maxiter=None, assembled=None):
    """Solve ``mass_coeff u + A u = rhs`` by conjugate residuals.

    On conservative operators the mean of the final residual is removed by a
    constant shift, which makes the discrete balance exact to rounding.
    """
    if not mass_coeff > 0:
        raise ParameterError(f"mass coefficient must be positive, got {mass_coeff}")
    if not tol > 0:
        raise ParameterError(f"solver tolerance must be positive, got {tol}")
    rhs = np.asarray(rhs, dtype=float)
    g = spec.grid
    if rhs.shape != g.shape:
        raise ValueError(f"rhs shape {rhs.shape} does not match grid {g.shape}")
    a = assembled or assemble(spec, t, lagged, flux)
    b = _as2d(rhs) + a.src
    if a.cx == 0.0 and a.cy == 0.0:
        return (b / (mass_coeff + a.diag)).reshape(g.shape)
    x = _as2d(np.array(x0, dtype=float) if x0 is not None else b / mass_coeff).copy()
    cap = maxiter if maxiter is not None else 10 * g.size
    its, hist = _backend.kernels.cr_solve(b, x, float(mass_coeff), a.cx, a.cy, a.diag, float(tol), int(cap))
    if its < 0:
        raise SolverError(
            f"conjugate residuals did not reach {tol:g} in {cap} iterations "
            f"(last residual {hist[-1]:.3e})", hist)
    if a.conservative:
        ax = np.empty_like(x)
        _backend.kernels.apply_operator(x, float(mass_coeff), a.cx, a.cy, a.diag, ax)
        x += (b - ax).sum() / (b.size * mass_coeff)
    return x.reshape(g.shape)
