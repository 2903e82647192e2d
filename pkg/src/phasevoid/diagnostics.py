"""Per-step monitors: mass, Lyapunov energy, dissipation, complementarity residual.

The functions take a step configuration only through its attributes
``gamma_cap``, ``constraint``, ``sigma`` and ``double_well``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, astuple, dataclass, fields
from functools import lru_cache

import numpy as np

from . import operators as ops
from .constraint import normal_cone_distance, phi_sigma_field, project_field
from .gamma import gamma_sigma, gamma_sigma_primitive
from .model import Grid, MaterialParams, State, Watertight

CSV_HEADER = "t,mass,energy,dissipation,min_theta,vi_residual,picard_iters,boundary_intake"
CSV_VERSION = 1


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    energy: float
    dissipation: float
    min_theta: float
    vi_residual: float
    picard_iters: int
    boundary_intake: float

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def row(self) -> str:
        return ",".join(str(v) if isinstance(v, int) else repr(float(v)) for v in astuple(self))

    def as_dict(self):
        return asdict(self)


class DiagnosticsWriter:
    """Streams records as CSV rows under the fixed header."""

    def __init__(self, stream):
        self.stream = stream
        stream.write(CSV_HEADER + "\n")

    def write(self, rec: DiagnosticsRecord):
        self.stream.write(rec.row() + "\n")


def read_csv(text_or_path):
    if isinstance(text_or_path, str) and "\n" in text_or_path:
        f = io.StringIO(text_or_path)
    else:
        f = open(text_or_path, encoding="utf-8")
    with f:
        rows = list(csv.DictReader(f))
    return [DiagnosticsRecord(**{k: (int(v) if k == "picard_iters" else float(v)) for k, v in r.items()})
            for r in rows]


def _cap(cfg):
    return getattr(cfg, "gamma_cap", 30.0) if cfg is not None else 30.0


def theta_of(state: State, cfg=None):
    return gamma_sigma(state.w, _cap(cfg))


def min_theta(state: State, cfg=None) -> float:
    return float(np.min(theta_of(state, cfg)))


def total_mass(state: State, params: MaterialParams, grid: Grid) -> float:
    return grid.integrate(params.k * state.p + params.rho1 * state.beta1 + params.rho2 * state.beta2)


@lru_cache(maxsize=64)
def _neumann(coeff, grid):
    spec = ops.OperatorSpec(coeff, grid, Watertight())
    return spec, ops.assemble(spec)


def _stencil_form(u, v, coeff, grid):
    """``<B u, v>`` over interior faces, cell-volume weighted."""
    spec, a = _neumann(coeff, grid)
    return grid.integrate(ops.apply_linear(spec, u, a) * v)


def lyapunov_energy(state: State, params: MaterialParams, cfg, grid: Grid) -> float:
    """Discrete energy that backward Euler makes non-increasing without sources."""
    cap = _cap(cfg)
    dens = 0.5 * params.k * state.p**2 + params.c0 * gamma_sigma_primitive(state.w, cap) + params.ell * state.beta1
    if getattr(cfg, "constraint", "projection") == "yosida":
        dens = dens + phi_sigma_field(state.beta1, state.beta2, cfg.sigma)
    well = getattr(cfg, "double_well", None)
    if well is not None:
        dens = dens + well.value(state.beta1, state.beta2)
    e = grid.integrate(dens)
    if params.nu > 0:
        e += 0.5 * (_stencil_form(state.beta1, state.beta1, params.nu, grid)
                    + _stencil_form(state.beta2, state.beta2, params.nu, grid))
    return e


def dissipation(old: State, new: State, dt: float, params: MaterialParams, cfg, grid: Grid) -> float:
    """``m <B p, p> + lam <B w, theta> + mu |d beta / dt|^2`` at the new level."""
    theta = theta_of(new, cfg)
    d = _stencil_form(new.p, new.p, params.m, grid) + _stencil_form(new.w, theta, params.lam, grid)
    if dt > 0:
        rate = ((new.beta1 - old.beta1) / dt) ** 2 + ((new.beta2 - old.beta2) / dt) ** 2
        d += params.mu * grid.integrate(rate)
    return d


def vi_residual(state: State, forcing, params: MaterialParams, grid: Grid, old: State | None = None,
                dt: float | None = None) -> float:
    """Max over cells of ``dist(F - mu d beta/dt - nu B beta, N_K(P beta))``.

    Without ``old`` the rate term is dropped (stationary inclusion).
    """
    v1 = np.asarray(forcing[0], dtype=float) + 0.0 * state.beta1
    v2 = np.asarray(forcing[1], dtype=float) + 0.0 * state.beta2
    if old is not None and dt:
        v1 = v1 - params.mu * (state.beta1 - old.beta1) / dt
        v2 = v2 - params.mu * (state.beta2 - old.beta2) / dt
    if params.nu > 0:
        spec, a = _neumann(params.nu, grid)
        v1 = v1 - ops.apply_linear(spec, state.beta1, a)
        v2 = v2 - ops.apply_linear(spec, state.beta2, a)
    q1, q2 = project_field(state.beta1, state.beta2)
    return float(np.max(normal_cone_distance(v1, v2, q1, q2)))


def boundary_intake(state: State, params: MaterialParams, grid: Grid, bc, t=0.0, lagged=None) -> float:
    """Liquid intake through the wall, ``int m dp/dn`` (positive for inflow)."""
    spec = ops.OperatorSpec(params.m, grid, bc.pressure)
    lag = state.p if lagged is None else lagged
    return 0.0 - ops.boundary_outflow(spec, state.p, t=t, lagged=lag)
