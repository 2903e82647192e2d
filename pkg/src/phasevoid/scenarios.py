"""Homogeneous freezing experiments with closed-form end states.

Three presets:

* ``bottle-freeze``: a sealed container of liquid cooled slowly below the
  critical temperature. Freezing is blocked by the pressure it builds, and the
  equilibrium pressure is linear in the undercooling.
* ``emulsion-freeze``: a liquid/void mixture cooled deeply, then warmed back to
  just below the critical temperature. Depending on the initial liquid
  fraction the end state is a saturated ice-water mix or ice with voids.
* ``glacier-equilibrium``: saturated ice-water states on the pressure-dependent
  phase-change curve are stationary, and small temperature offsets freeze or
  melt with the right sign.

All runs use a two-cell 1-D grid: the fields stay uniform, so the grid only
carries the homogeneous evolution.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import diagnostics as diag
from .integrator import StepConfig, coupled_step, phase_forcing, run
from .gamma import gamma_sigma
from .model import (
    BoundaryConfig,
    Grid,
    MaterialParams,
    ParameterError,
    PiecewiseConstant,
    SourceConfig,
    State,
)

HOMOGENEOUS_GRID = Grid((2,), (1.0,))
ORACLE_TOL = 0.02


# ---------------------------------------------------------------------------
# oracles


def bottle_freeze_oracle(params: MaterialParams, theta_final: float) -> float:
    """Pressure that holds a sealed liquid at temperature ``theta_final <= theta_c``.

    Zero at the critical temperature; above it nothing freezes and there is no oracle.
    """
    if not theta_final <= params.theta_c:
        raise ParameterError("no freezing pressure at or above the critical temperature")
    return params.latent * (params.theta_c - theta_final) / (params.rho1 - params.rho2)


def emulsion_oracle(params: MaterialParams, beta1_0: float):
    """End fractions of a frozen liquid/void mixture with initial liquid fraction ``beta1_0``.

    Enough liquid fills the voids and leaves a saturated mix; too little
    freezes completely and leaves voids, with the solid mass equal to the
    initial liquid mass.
    """
    if not 0 < beta1_0 < 1:
        raise ParameterError(f"initial liquid fraction must be in (0, 1), got {beta1_0}")
    r1, r2 = params.rho1, params.rho2
    if beta1_0 >= r2 / r1:
        return (r1 * beta1_0 - r2) / (r1 - r2), (r1 - r1 * beta1_0) / (r1 - r2)
    return 0.0, r1 * beta1_0 / r2


def glacier_relation(params: MaterialParams, p: float) -> float:
    """Phase-change temperature of a saturated mix under pressure ``p >= 0``."""
    if p < 0:
        raise ValueError(f"the phase-change curve is defined for p >= 0, got {p}")
    return params.theta_c - p * (params.rho1 - params.rho2) / params.latent


# ---------------------------------------------------------------------------
# presets


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    params: MaterialParams
    grid: Grid
    initial: Callable[[Grid], State]
    sources: SourceConfig
    step: StepConfig
    t_end: float
    settings: dict = field(default_factory=dict)
    bc: BoundaryConfig = field(default_factory=BoundaryConfig)


@dataclass
class ScenarioReport:
    name: str
    config: dict
    oracle: object
    measured: object
    rel_error: float
    passed: bool
    checks: dict = field(default_factory=dict)
    result: object = None

    def lines(self):
        out = [f"scenario {self.name}"]
        for k, v in self.config.items():
            out.append(f"  {k} = {v}")
        out.append(f"  oracle   = {_fmt(self.oracle)}")
        out.append(f"  measured = {_fmt(self.measured)}")
        out.append(f"  rel_error = {self.rel_error:.3e}")
        for k, v in self.checks.items():
            out.append(f"  {k} = {_fmt(v)}")
        out.append(f"  {'PASS' if self.passed else 'FAIL'}")
        return out

    def as_dict(self):
        return {"name": self.name, "config": self.config, "oracle": self.oracle, "measured": self.measured,
                "rel_error": self.rel_error, "passed": self.passed, "checks": self.checks}


def _fmt(v):
    if isinstance(v, (tuple, list)):
        return "(" + ", ".join(f"{float(x):.6g}" for x in v) + ")"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def bottle_freeze(rho1=1.0, rho2=0.9, undercool=0.05, k=1e-3, dt=5e-4, ramp=1.0, hold=3.0,
                  constraint="projection", sigma=None, **material) -> ScenarioSpec:
    """Cool a sealed liquid by ``undercool`` with a uniform entropy sink over ``ramp``.

    The sink is sized from the entropy balance so the equilibrium temperature
    is ``theta_c - undercool`` once the pressure has absorbed the density jump.
    """
    params = MaterialParams(rho1=rho1, rho2=rho2, k=k, **material)
    theta_f = params.theta_c - undercool
    if not theta_f > 0:
        raise ParameterError("undercooling must leave a positive temperature")
    s_frozen = params.k * bottle_freeze_oracle(params, theta_f) / (rho1 - rho2)
    total = params.c0 * (math.log(theta_f) - math.log(params.theta_c)) - params.latent * s_frozen
    sink = PiecewiseConstant((0.0, ramp, ramp + hold), (total / ramp, 0.0))
    return ScenarioSpec(
        "bottle-freeze", params, HOMOGENEOUS_GRID,
        lambda g: State.uniform(g, p=0.0, theta=params.theta_c, beta1=1.0, beta2=0.0),
        SourceConfig(R=sink), StepConfig(dt=dt, constraint=constraint, sigma=sigma), ramp + hold,
        {"undercool": undercool, "ramp": ramp, "hold": hold})


def emulsion_freeze(beta1_0=0.95, rho1=1.0, rho2=0.9, k=1e-3, c0=50.0, deep=0.5, final_undercool=0.05,
                    dt=2e-3, constraint="projection", sigma=None, **material) -> ScenarioSpec:
    """Deep-cool a liquid/void mixture to ``deep`` times ``theta_c``, hold, then warm to just below.

    The hold is long enough for the slow manifold of the nearly incompressible
    mixture to reach the edge of K. The large heat capacity lets the entropy
    source set the temperature path despite the latent heat.
    """
    params = MaterialParams(rho1=rho1, rho2=rho2, k=k, c0=c0, **material)
    tc = params.theta_c
    cool, warm, settle = 0.25, 0.25, 1.5
    drive = params.latent * tc * (1.0 - deep)
    hold = 1.25 * beta1_0 * params.mu * (rho1**2 + rho2**2) / (rho2**2 * drive)
    w0, w1, w2 = math.log(tc), math.log(deep * tc), math.log(tc - final_undercool)
    t1, t2, t3 = cool, cool + hold, cool + hold + warm
    series = PiecewiseConstant((0.0, t1, t2, t3, t3 + settle),
                               (c0 * (w1 - w0) / cool, 0.0, c0 * (w2 - w1) / warm, 0.0))
    step = StepConfig(dt=dt, acceleration="anderson", picard_max=500, constraint=constraint, sigma=sigma)
    return ScenarioSpec(
        "emulsion-freeze", params, HOMOGENEOUS_GRID,
        lambda g: State.uniform(g, p=0.0, theta=tc, beta1=beta1_0, beta2=0.0),
        SourceConfig(R=series), step, t3 + settle,
        {"beta1_0": beta1_0, "deep": deep, "final_undercool": final_undercool, "hold": hold})


def _config_echo(spec: ScenarioSpec):
    out = {"params": asdict(spec.params), "dt": spec.step.dt, "t_end": spec.t_end,
           "constraint": spec.step.constraint}
    if spec.step.sigma is not None:
        out["sigma"] = spec.step.sigma
    out.update(spec.settings)
    return out


def _rel(measured, oracle):
    m = np.atleast_1d(np.asarray(measured, dtype=float))
    o = np.atleast_1d(np.asarray(oracle, dtype=float))
    return float(np.max(np.abs(m - o)) / np.max(np.abs(o)))


def simulate(spec: ScenarioSpec, observers=()):
    return run(spec.initial(spec.grid), spec.step, spec.params, spec.grid, spec.bc, spec.sources,
               spec.t_end, observers=observers)


def _common_checks(spec, res):
    recs = res.records
    m0 = recs[0].mass
    return {
        "mass_drift": max(abs(r.mass - m0) for r in recs) / abs(m0),
        "min_theta": min(r.min_theta for r in recs),
        "halvings": res.halvings,
    }


def stationary_residual(state: State, params: MaterialParams, cfg: StepConfig, grid: Grid) -> float:
    theta = gamma_sigma(state.w, cfg.gamma_cap)
    forcing = phase_forcing(state.p, theta, params, cfg, (state.beta1, state.beta2))
    return diag.vi_residual(state, forcing, params, grid)


def run_bottle(spec: ScenarioSpec | None = None, vi_tol=1e-6, observers=()) -> ScenarioReport:
    spec = spec or bottle_freeze()
    res = simulate(spec, observers)
    st = res.state
    theta = float(np.mean(gamma_sigma(st.w, spec.step.gamma_cap)))
    oracle = bottle_freeze_oracle(spec.params, theta)
    measured = float(np.mean(st.p))
    checks = _common_checks(spec, res)
    checks["theta_final"] = theta
    checks["beta_final"] = (float(np.mean(st.beta1)), float(np.mean(st.beta2)))
    checks["vi_residual"] = stationary_residual(st, spec.params, spec.step, spec.grid)
    checks["median_picard"] = float(np.median([r.picard_iters for r in res.records[1:]]))
    rel = _rel(measured, oracle)
    ok = rel <= ORACLE_TOL and checks["vi_residual"] <= vi_tol and checks["min_theta"] > 0
    return ScenarioReport(spec.name, _config_echo(spec), oracle, measured, rel, ok, checks, res)


def run_emulsion(spec: ScenarioSpec | None = None, observers=()) -> ScenarioReport:
    spec = spec or emulsion_freeze()
    res = simulate(spec, observers)
    st = res.state
    oracle = emulsion_oracle(spec.params, spec.settings["beta1_0"])
    measured = (float(np.mean(st.beta1)), float(np.mean(st.beta2)))
    checks = _common_checks(spec, res)
    checks["p_final"] = float(np.mean(st.p))
    rel = _rel(measured, oracle)
    ok = rel <= ORACLE_TOL and checks["min_theta"] > 0
    return ScenarioReport(spec.name, _config_echo(spec), oracle, measured, rel, ok, checks, res)


def glacier_points(params: MaterialParams, n=10, p_max=1.0):
    ps = np.linspace(0.0, p_max, n)
    return [(float(p), glacier_relation(params, p)) for p in ps]


def run_glacier(params: MaterialParams | None = None, n=10, p_max=1.0, delta=1e-3, dt=1e-3,
                beta=(0.5, 0.5), stat_tol=1e-8) -> ScenarioReport:
    """Stationarity and freeze/melt sign at ``n`` points of the phase-change curve."""
    params = params or MaterialParams(k=1e-3)
    grid = HOMOGENEOUS_GRID
    cfg = StepConfig(dt=dt, acceleration="anderson", picard_max=500)
    worst = 0.0
    signs_ok = True
    rows = []
    for p, theta in glacier_points(params, n, p_max):
        base = State.uniform(grid, p=p, theta=theta, beta1=beta[0], beta2=beta[1])
        out = coupled_step(base, cfg, params, grid)
        res = diag.vi_residual(out.state, out.forcing, params, grid, base, cfg.dt)
        worst = max(worst, res, stationary_residual(base, params, cfg, grid))
        d_cold = _beta2_rate(base.copy(), theta - delta, cfg, params, grid)
        d_warm = _beta2_rate(base.copy(), theta + delta, cfg, params, grid)
        ok = d_cold > 0 and d_warm < 0
        signs_ok &= ok
        rows.append((p, theta, d_cold, d_warm, ok))
    checks = {"points": len(rows), "signs_ok": signs_ok,
              "min_freeze_rate": min(r[2] for r in rows), "max_melt_rate": max(r[3] for r in rows)}
    config = {"params": asdict(params), "dt": dt, "delta": delta, "beta": beta, "p_max": p_max}
    report = ScenarioReport("glacier-equilibrium", config, 0.0, worst, worst, worst <= stat_tol and signs_ok,
                            checks, rows)
    return report


def _beta2_rate(state: State, theta: float, cfg, params, grid) -> float:
    state.w = np.full_like(state.w, math.log(theta))
    out = coupled_step(state, cfg, params, grid)
    return float(np.mean(out.state.beta2 - state.beta2)) / cfg.dt


PRESETS = {
    "bottle-freeze": ("sealed liquid cooled below the critical temperature", run_bottle),
    "emulsion-freeze": ("liquid/void mixture frozen deeply, then warmed", run_emulsion),
    "glacier-equilibrium": ("saturated mix on the pressure-dependent phase-change curve", run_glacier),
}


def run_preset(name: str, observers=(), **options) -> ScenarioReport:
    """Run a preset; ``options`` go to its builder (glacier: ``material`` plus ``run_glacier`` keywords)."""
    if name not in PRESETS:
        raise KeyError(f"unknown scenario {name!r}; have {sorted(PRESETS)}")
    if name == "bottle-freeze":
        return run_bottle(bottle_freeze(**options), observers=observers)
    if name == "emulsion-freeze":
        return run_emulsion(emulsion_freeze(**options), observers=observers)
    material = {"k": 1e-3, **options.pop("material", {})}
    return run_glacier(MaterialParams(**material), **options)
