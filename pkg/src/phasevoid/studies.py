"""Convergence studies behind ``phasevoid sweep``: sigma, dt and mesh legs.

Each leg is an independent run; its final fields are compared with the last
(reference) leg, and successive legs give the observed order.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from . import scenarios
from .config import ConfigError, RunConfig, build
from .integrator import StepError, run
from .model import Grid, State, Watertight

AXES = ("sigma", "dt", "mesh")


def manufactured_error(grid: Grid, coefficient=1.0, mass=1.0, tol=1e-12) -> float:
    """L2 error of the implicit diffusion solve against ``prod_i cos(pi x_i / L_i)`` (Neumann)."""
    xs = grid.centers()
    exact = np.ones(grid.shape)
    lam = 0.0
    for x, L in zip(xs, grid.extent):
        exact = exact * np.cos(np.pi * x / L)
        lam += (np.pi / L) ** 2
    spec = ops.OperatorSpec(coefficient, grid, Watertight())
    u = ops.solve_implicit(spec, mass, (mass + coefficient * lam) * exact, tol)
    return math.sqrt(grid.integrate((u - exact) ** 2))


def restrict(u, factor):
    """Block average onto a grid coarser by integer ``factor`` per axis."""
    if factor == 1:
        return u
    shape = []
    for n in u.shape:
        shape += [n // factor, factor]
    return u.reshape(shape).mean(axis=tuple(range(1, 2 * u.ndim, 2)))


@dataclass(eq=False)
class Leg:
    value: float
    status: str = "ok"
    error: str = ""
    state: State | None = None
    grid: Grid | None = None
    trajectory: list = field(default_factory=list)
    manufactured: float | None = None


def _with(cfg: RunConfig, axis, value) -> RunConfig:
    d = copy.deepcopy(cfg.canonical)
    if axis == "sigma":
        d["stepping"]["constraint"] = "yosida"
        d["stepping"]["sigma"] = float(value)
    elif axis == "dt":
        d["stepping"]["dt"] = float(value)
    elif axis == "mesh":
        n = int(value)
        if n != value:
            raise ConfigError(f"mesh values must be integers, got {value}")
        d["grid"]["n"] = [n] * len(d["grid"]["n"])
    else:
        raise ConfigError(f"sweep axis must be one of {AXES}, got {axis!r}")
    return build(d)


SCENARIO_BUILDERS = {"bottle-freeze": scenarios.bottle_freeze, "emulsion-freeze": scenarios.emulsion_freeze}


def _scenario_leg(cfg: RunConfig, axis, value, leg: Leg, obs):
    name = cfg.scenario["name"]
    if name not in SCENARIO_BUILDERS or axis == "mesh":
        raise ConfigError(f"scenario {name!r} cannot be swept along {axis!r}")
    opts = dict(cfg.scenario["options"])
    if axis == "sigma":
        opts.update(constraint="yosida", sigma=float(value))
    else:
        opts["dt"] = float(value)
    try:
        spec = SCENARIO_BUILDERS[name](**opts)
    except TypeError as exc:
        raise ConfigError(f"bad scenario option: {exc}") from exc
    leg.grid = spec.grid
    res = scenarios.simulate(spec, obs)
    return res


def run_leg(cfg: RunConfig, axis, value, keep_trajectory=False) -> Leg:
    leg = Leg(value)
    obs = []
    if keep_trajectory:
        obs.append(lambda n, t, st, rec: leg.trajectory.append((t, st.beta1.copy(), st.beta2.copy())))
    try:
        if cfg.scenario:
            res = _scenario_leg(cfg, axis, value, leg, obs)
            leg.state = res.state
            if res.halvings:
                leg.status = f"ok ({res.halvings} dt halvings)"
            return leg
        c = _with(cfg, axis, value)
        leg.grid = c.grid
        if c.mode == "manufactured":
            leg.manufactured = manufactured_error(c.grid, c.params.m, c.params.k / c.step.dt)
            return leg
        res = run(c.initial, c.step, c.params, c.grid, c.bc, c.sources, c.t_end, observers=obs, record=False)
        leg.state = res.state
        if res.halvings:
            leg.status = f"ok ({res.halvings} dt halvings)"
    except (StepError, ops.SolverError, ConfigError) as exc:
        leg.status = "failed"
        leg.error = str(exc)
    return leg


def _l2(a, b, grid):
    return math.sqrt(grid.integrate((a - b) ** 2))


def _field_diff(a: Leg, b: Leg, f):
    ua, ub = getattr(a.state, f), getattr(b.state, f)
    ga, gb = a.grid, b.grid
    if ga.n != gb.n:
        coarse, fine = (a, b) if ga.size < gb.size else (b, a)
        ratio = fine.grid.n[0] // coarse.grid.n[0]
        uf = restrict(getattr(fine.state, f), ratio)
        return _l2(getattr(coarse.state, f), uf, coarse.grid)
    return _l2(ua, ub, ga)


def _trajectory_diff(a: Leg, b: Leg):
    """Max over common output times of the L2 distance of the fraction pair."""
    if len(a.trajectory) != len(b.trajectory) or not a.trajectory:
        return float("nan")
    worst = 0.0
    for (ta, a1, a2), (tb, b1, b2) in zip(a.trajectory, b.trajectory):
        if abs(ta - tb) > 1e-12 * max(1.0, abs(ta)):
            return float("nan")
        worst = max(worst, math.sqrt(a.grid.integrate((a1 - b1) ** 2 + (a2 - b2) ** 2)))
    return worst


def _order(e1, e2, v1, v2):
    if not (e1 > 0 and e2 > 0) or v1 == v2:
        return float("nan")
    return math.log(e1 / e2) / math.log(v1 / v2)


@dataclass
class SweepTable:
    axis: str
    columns: list
    rows: list

    def csv(self) -> str:
        out = [",".join(self.columns)]
        for r in self.rows:
            out.append(",".join(_cell(r.get(c, "")) for c in self.columns))
        return "\n".join(out) + "\n"

    def column(self, name):
        return [r.get(name) for r in self.rows]


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return str(v).replace(",", ";")


FIELDS = ("p", "w", "beta1", "beta2")


def sweep(cfg: RunConfig, axis: str, values) -> SweepTable:
    """Run every leg; reference is the last value. Failed legs are reported and skipped."""
    values = list(values)
    if len(values) < 2:
        raise ConfigError("a sweep needs at least two values")
    if axis not in AXES:
        raise ConfigError(f"sweep axis must be one of {AXES}, got {axis!r}")
    keep = axis == "sigma"
    legs = [run_leg(cfg, axis, v, keep) for v in values]
    ok = [lg for lg in legs if lg.status.startswith("ok")]
    rows = []
    if cfg.mode == "manufactured":
        cols = ["value", "status", "error", "order"]
        prev = None
        for lg in legs:
            row = {"value": float(lg.value), "status": lg.status}
            if lg.manufactured is not None:
                row["error"] = lg.manufactured
                if prev is not None:
                    h_prev, h = 1.0 / prev.value, 1.0 / lg.value
                    row["order"] = _order(prev.manufactured, lg.manufactured, h_prev, h)
                prev = lg
            rows.append(row)
        return SweepTable(axis, cols, rows)
    cols = ["value", "status"] + [f"diff_ref_{f}" for f in FIELDS] + [f"diff_next_{f}" for f in FIELDS] \
        + [f"order_{f}" for f in FIELDS]
    if keep:
        cols.append("cauchy_beta_max_t")
    ref = ok[-1] if ok else None
    index = {id(lg): i for i, lg in enumerate(ok)}
    for lg in legs:
        row = {"value": float(lg.value), "status": lg.status if not lg.error else f"failed: {lg.error}"}
        if id(lg) in index and ref is not None:
            i = index[id(lg)]
            nxt = ok[i + 1] if i + 1 < len(ok) else None
            for f in FIELDS:
                row[f"diff_ref_{f}"] = _field_diff(lg, ref, f)
                if nxt is not None:
                    row[f"diff_next_{f}"] = _field_diff(lg, nxt, f)
            if keep and nxt is not None:
                row["cauchy_beta_max_t"] = _trajectory_diff(lg, nxt)
        rows.append(row)
    # order from successive differences: d_i / d_{i+1} against the value ratio of the legs
    scale = (lambda v: 1.0 / v) if axis == "mesh" else (lambda v: v)
    for i in range(len(rows) - 1):
        a, b = rows[i], rows[i + 1]
        for f in FIELDS:
            d1, d2 = a.get(f"diff_next_{f}"), b.get(f"diff_next_{f}")
            if d1 is not None and d2 is not None:
                b[f"order_{f}"] = _order(d1, d2, scale(a["value"]), scale(b["value"]))
    return SweepTable(axis, cols, rows)
