"""Domain types shared by every other module.

Material parameters, the grid, the state of the four unknown fields, boundary
laws and sources, plus the snapshot file format.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Callable, Union

import numpy as np


class ParameterError(ValueError):
    """Invalid material, grid or boundary parameter."""


# ---------------------------------------------------------------------------
# material


def mixture_compressibility(k1: float, k2: float, beta0) -> float:
    """Compressibility of the mixture, ``beta1_0 / k1 + beta2_0 / k2``."""
    if not (k1 > 0 and k2 > 0):
        raise ParameterError(f"phase compressibilities must be positive, got k1={k1}, k2={k2}")
    b1, b2 = (float(v) for v in beta0)
    if b1 < 0 or b2 < 0 or b1 + b2 > 1:
        raise ParameterError(f"reference fractions {beta0} are not in the admissible set K")
    return b1 / k1 + b2 / k2


@dataclass(frozen=True)
class MaterialParams:
    """Material coefficients.

    Defaults are the normalized values ``k = m = c0 = lam = mu = 1`` with
    ``ell / theta_c = 1``. The liquid must be denser than the solid.

    The constraint potential is always the indicator of the triangle K, so
    the bounded-domain requirement for ``nu = 0`` holds by construction.
    """

    rho1: float = 1.0
    rho2: float = 0.9
    k: float = 1.0
    m: float = 1.0
    c0: float = 1.0
    lam: float = 1.0
    ell: float = 1.0
    theta_c: float = 1.0
    mu: float = 1.0
    nu: float = 0.0

    def __post_init__(self):
        for name in ("rho1", "rho2", "k", "m", "c0", "lam", "ell", "theta_c", "mu", "nu"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ParameterError(f"{name} must be a finite number, got {v!r}")
        if not self.rho2 > 0:
            raise ParameterError(f"rho2 must be positive, got {self.rho2}")
        if not self.rho1 > self.rho2:
            raise ParameterError(
                f"the liquid must be denser than the solid (rho1 > rho2 > 0), "
                f"got rho1={self.rho1}, rho2={self.rho2}"
            )
        for name in ("k", "m", "c0", "lam", "ell", "theta_c", "mu"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if self.nu < 0:
            raise ParameterError(f"nu must be non-negative, got {self.nu}")

    @classmethod
    def from_phase_compressibilities(cls, k1, k2, beta0, **kw):
        return cls(k=mixture_compressibility(k1, k2, beta0), **kw)

    @property
    def latent(self) -> float:
        """The ratio ``ell / theta_c`` multiplying phase rates and undercooling."""
        return self.ell / self.theta_c

    def replace(self, **kw) -> "MaterialParams":
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid on ``[0, extent_0] x [0, extent_1]``."""

    n: tuple
    extent: tuple

    def __post_init__(self):
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        ext = tuple(float(v) for v in np.atleast_1d(self.extent))
        if len(ext) == 1 and len(n) > 1:
            ext = ext * len(n)
        if len(n) not in (1, 2):
            raise ParameterError(f"only 1-D and 2-D grids are supported, got n={n}")
        if len(ext) != len(n):
            raise ParameterError(f"extent {ext} does not match n {n}")
        if any(v < 2 for v in n):
            raise ParameterError(f"need at least 2 cells per axis, got n={n}")
        if any(not (e > 0 and math.isfinite(e)) for e in ext):
            raise ParameterError(f"extent must be positive, got {ext}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "extent", ext)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple:
        return self.n

    @cached_property
    def h(self) -> tuple:
        return tuple(e / k for e, k in zip(self.extent, self.n))

    @cached_property
    def size(self) -> int:
        return int(np.prod(self.n))

    @cached_property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @cached_property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    def axes(self):
        return [(np.arange(k) + 0.5) * hk for k, hk in zip(self.n, self.h)]

    def centers(self):
        """Cell-centre coordinate arrays, one per axis, each of ``shape``."""
        return np.meshgrid(*self.axes(), indexing="ij")

    def zeros(self):
        return np.zeros(self.shape)

    def full(self, value):
        return np.full(self.shape, float(value))

    def integrate(self, f) -> float:
        return float(np.sum(f)) * self.cell_volume

    def sides(self):
        """Boundary sides as ``(axis, end)`` with ``end`` 0 (low) or -1 (high)."""
        return [(ax, end) for ax in range(self.dim) for end in (0, -1)]

    def side_index(self, axis, end):
        idx = [slice(None)] * self.dim
        idx[axis] = end
        return tuple(idx)

    def side_coords(self, axis, end):
        """Coordinates of the boundary face centres on one side."""
        pos = 0.0 if end == 0 else self.extent[axis]
        cs = [c[self.side_index(axis, end)] for c in self.centers()]
        cs[axis] = np.full_like(cs[axis], pos)
        return cs

    def face_area(self, axis) -> float:
        """Measure of one boundary face normal to ``axis`` (1 in 1-D)."""
        return float(np.prod([hk for i, hk in enumerate(self.h) if i != axis]))


# ---------------------------------------------------------------------------
# fields and data

FieldData = Union[float, Callable]


def evaluate(data, coords, t):
    """Evaluate constant-or-callable data ``f(*coords, t)`` on coordinate arrays."""
    if callable(data):
        out = np.asarray(data(*coords, t), dtype=float)
        return np.broadcast_to(out, coords[0].shape)
    return np.full(coords[0].shape, float(data))


@dataclass
class State:
    """The unknowns at one time level: pressure, log-temperature, fractions."""

    p: np.ndarray
    w: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    t: float = 0.0

    FIELDS = ("p", "w", "beta1", "beta2")

    def __post_init__(self):
        shapes = {np.shape(getattr(self, f)) for f in self.FIELDS}
        if len(shapes) != 1:
            raise ParameterError(f"state fields have mismatched shapes {shapes}")
        for f in self.FIELDS:
            setattr(self, f, np.asarray(getattr(self, f), dtype=float))

    @classmethod
    def uniform(cls, grid: Grid, p=0.0, theta=1.0, beta1=1.0, beta2=0.0, t=0.0):
        return cls(grid.full(p), grid.full(math.log(theta)), grid.full(beta1), grid.full(beta2), t)

    @classmethod
    def from_functions(cls, grid: Grid, p, theta, beta1, beta2, t=0.0):
        xs = grid.centers()
        th = evaluate(theta, xs, t)
        if np.any(th <= 0):
            raise ParameterError("initial temperature must be positive")
        return cls(evaluate(p, xs, t).copy(), np.log(th), evaluate(beta1, xs, t).copy(),
                   evaluate(beta2, xs, t).copy(), t)

    @property
    def shape(self):
        return self.p.shape

    def copy(self) -> "State":
        return State(self.p.copy(), self.w.copy(), self.beta1.copy(), self.beta2.copy(), self.t)

    def readonly(self) -> "State":
        views = []
        for f in self.FIELDS:
            v = getattr(self, f).view()
            v.flags.writeable = False
            views.append(v)
        return State(*views, t=self.t)

    def __eq__(self, other):
        if not isinstance(other, State):
            return NotImplemented
        return self.t == other.t and all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in self.FIELDS
        )


@dataclass(frozen=True)
class PiecewiseConstant:
    """Spatially uniform series: ``values[i]`` on ``times[i] < t <= times[i + 1]``.

    Before ``times[0]`` the first value holds, after ``times[-1]`` the last one.
    """

    times: tuple
    values: tuple

    def __post_init__(self):
        times = tuple(float(v) for v in self.times)
        values = tuple(float(v) for v in self.values)
        if len(times) != len(values) + 1:
            raise ParameterError("a piecewise-constant series needs len(times) == len(values) + 1")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ParameterError("series breakpoints must be strictly increasing")
        if not all(math.isfinite(v) for v in times + values):
            raise ParameterError("series data must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def at(self, t) -> float:
        i = int(np.searchsorted(self.times, t, side="left")) - 1
        return self.values[min(max(i, 0), len(self.values) - 1)]

    def __call__(self, *args):
        return self.at(args[-1])


@dataclass(frozen=True)
class Ramp:
    """Uniform value moving linearly from ``start`` to ``end`` over ``[t0, t1]``."""

    start: float
    end: float
    t0: float
    t1: float

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ParameterError("ramp needs t1 > t0")

    def at(self, t) -> float:
        s = min(max((t - self.t0) / (self.t1 - self.t0), 0.0), 1.0)
        return self.start + s * (self.end - self.start)

    def __call__(self, *args):
        return self.at(args[-1])


# ---------------------------------------------------------------------------
# boundary laws


@dataclass(frozen=True)
class Watertight:
    """Zero normal flux."""


@dataclass(frozen=True)
class Robin:
    """``c du/dn + alpha (u - ext) = 0``."""

    alpha: float
    ext: FieldData = 0.0


@dataclass(frozen=True)
class Dirichlet:
    """``u = ext`` on the boundary (the ``alpha -> infinity`` Robin limit)."""

    ext: FieldData = 0.0


@dataclass(frozen=True)
class SemiPermeable:
    """Inflow-only wall: ``c du/dn - alpha (u - ext)^- = 0``."""

    alpha: float
    ext: FieldData = 0.0


@dataclass(frozen=True)
class EntropyFlux:
    """Robin law on ``w``: ``lam dw/dn + alpha w = Pi`` with ``Pi`` from the sources."""

    alpha: float = 0.0


@dataclass(frozen=True)
class ThetaRobin:
    """Robin law on the temperature, ``lam dtheta/dn + alpha (theta - theta_ext) = 0``.

    Carried on ``w`` as the lagged flux ``lam dw/dn = -alpha (1 - theta_ext / theta)``.
    """

    alpha: float
    theta_ext: FieldData = 1.0


PressureLaw = Union[Watertight, Robin, Dirichlet, SemiPermeable]
TemperatureLaw = Union[EntropyFlux, ThetaRobin]


@dataclass(frozen=True)
class BoundaryConfig:
    """Boundary laws per field. Phase fractions are always homogeneous Neumann."""

    pressure: object = field(default_factory=Watertight)
    temperature: object = field(default_factory=EntropyFlux)

    def __post_init__(self):
        if not isinstance(self.pressure, (Watertight, Robin, Dirichlet, SemiPermeable)):
            raise ParameterError(f"unknown pressure boundary law {self.pressure!r}")
        if not isinstance(self.temperature, (EntropyFlux, ThetaRobin)):
            raise ParameterError(f"unknown temperature boundary law {self.temperature!r}")
        for law in (self.pressure, self.temperature):
            a = getattr(law, "alpha", 0.0)
            if not a >= 0:
                raise ParameterError(f"boundary coefficient alpha must be >= 0, got {a}")

    @property
    def watertight(self) -> bool:
        return isinstance(self.pressure, Watertight)


@dataclass(frozen=True)
class SourceConfig:
    """Entropy source ``R(x, t)`` and boundary entropy flux ``Pi(x_b, t)``."""

    R: FieldData = 0.0
    Pi: FieldData = 0.0


# ---------------------------------------------------------------------------
# postprocessing


def darcy_flux(state: State, params: MaterialParams, grid: Grid):
    """Liquid mass flux ``-m grad p``, shape ``(dim, *grid.shape)``.

    Centred differences inside, second-order one-sided at the boundary.
    """
    g = np.gradient(state.p, *grid.h, edge_order=2)
    if grid.dim == 1:
        g = [g]
    return -params.m * np.stack(g)


def liquid_velocity(state, params, grid, threshold=1e-8):
    """Velocity ``U1 = flux / (rho1 beta1)``; zero where ``beta1 <= threshold``."""
    flux = darcy_flux(state, params, grid)
    dens = params.rho1 * state.beta1
    safe = np.where(state.beta1 > threshold, dens, 1.0)
    return np.where(state.beta1 > threshold, flux / safe, 0.0)


# ---------------------------------------------------------------------------
# snapshots

SNAPSHOT_MAGIC = "phasevoid-snapshot v1"


def write_snapshot(path, state: State, grid: Grid):
    """One header line, then ``cell,p,w,beta1,beta2`` rows in C order."""
    head = (
        f"# {SNAPSHOT_MAGIC} dim={grid.dim} n={','.join(map(str, grid.n))} "
        f"h={','.join(repr(v) for v in grid.h)} t={state.t!r} fields=p,w,beta1,beta2"
    )
    cols = [getattr(state, f).ravel() for f in State.FIELDS]
    lines = [head]
    for i in range(grid.size):
        lines.append(f"{i}," + ",".join(repr(float(c[i])) for c in cols))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_snapshot(path):
    """Inverse of ``write_snapshot``; returns ``(state, grid)``."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    head = text[0]
    if SNAPSHOT_MAGIC not in head:
        raise ValueError(f"{path}: not a snapshot file")
    meta = dict(tok.split("=", 1) for tok in head.split() if "=" in tok)
    n = tuple(int(v) for v in meta["n"].split(","))
    h = tuple(float(v) for v in meta["h"].split(","))
    if meta["fields"] != "p,w,beta1,beta2":
        raise ValueError(f"{path}: unsupported field order {meta['fields']}")
    grid = Grid(n, tuple(hk * k for hk, k in zip(h, n)))
    data = np.array([[float(v) for v in row.split(",")[1:]] for row in text[1:] if row])
    if data.shape != (grid.size, 4):
        raise ValueError(f"{path}: expected {grid.size} rows of 4 fields")
    arrs = [data[:, j].reshape(n).copy() for j in range(4)]
    return State(*arrs, t=float(meta["t"])), grid

