"""Backward-Euler time stepping of the coupled pressure / entropy / phase system.

One step is a fixed-point loop: with the phase fractions frozen, solve the
entropy and pressure equations, then the constrained phase equation, and repeat
until the increments stall. The converged fractions are followed by one more
pressure and entropy solve so all four fields sit on the same fixed point.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import diagnostics as diag
from . import operators as ops
from .constraint import DoubleWell, dist_K, project_field, yosida_resolvent
from .gamma import GammaSigma, delta_sigma, gamma_sigma, gamma_sigma_primitive  # noqa: F401
from .model import (
    BoundaryConfig,
    Grid,
    MaterialParams,
    ParameterError,
    SemiPermeable,
    SourceConfig,
    State,
    ThetaRobin,
    Watertight,
    evaluate,
)

log = logging.getLogger(__name__)

CONSTRAINT_MODES = ("projection", "yosida")


class StepError(RuntimeError):
    """A time step could not be completed."""


class PicardError(StepError):
    """The coupling iteration hit its cap."""


class ConstraintError(StepError):
    """The phase sub-step failed or left the admissible region."""


@dataclass(frozen=True)
class StepConfig:
    dt: float
    picard_tol: float = 1e-10
    picard_max: int = 200
    constraint: str = "projection"
    sigma: Optional[float] = None
    lin_tol: float = ops.DEFAULT_LIN_TOL
    gamma_cap: float = 30.0
    max_halvings: int = 10
    inner_tol: Optional[float] = None
    inner_max: int = 500
    double_well: Optional[DoubleWell] = None
    check_constraint: bool = True
    acceleration: str = "none"
    anderson_depth: int = 3

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if not self.picard_tol > 0:
            raise ParameterError(f"picard_tol must be positive, got {self.picard_tol}")
        if self.picard_max < 1:
            raise ParameterError("picard_max must be at least 1")
        if self.constraint not in CONSTRAINT_MODES:
            raise ParameterError(f"constraint must be one of {CONSTRAINT_MODES}, got {self.constraint!r}")
        if self.constraint == "yosida" and not (self.sigma is not None and self.sigma > 0):
            raise ParameterError("yosida mode needs sigma > 0")
        if not self.lin_tol > 0:
            raise ParameterError("lin_tol must be positive")
        GammaSigma(self.gamma_cap)
        if self.max_halvings < 0:
            raise ParameterError("max_halvings must be >= 0")
        if self.acceleration not in ("none", "anderson"):
            raise ParameterError(f"acceleration must be 'none' or 'anderson', got {self.acceleration!r}")
        if self.anderson_depth < 1:
            raise ParameterError("anderson_depth must be at least 1")

    @property
    def gamma(self) -> GammaSigma:
        return GammaSigma(self.gamma_cap)

    @property
    def inner_tolerance(self) -> float:
        return self.inner_tol if self.inner_tol is not None else self.picard_tol

    def replace(self, **kw) -> "StepConfig":
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# operators for one run


def _static(law, data=()):
    if isinstance(law, (SemiPermeable, ThetaRobin)):
        return False
    return not any(callable(d) for d in data) and not callable(getattr(law, "ext", None))


class Operators:
    """The three diffusion operators of a run, with boundary data cached when static."""

    def __init__(self, grid: Grid, params: MaterialParams, bc: BoundaryConfig, sources: SourceConfig):
        self.grid = grid
        self.params = params
        self.bc = bc
        self.sources = sources
        self.pressure = ops.OperatorSpec(params.m, grid, bc.pressure)
        self.entropy = ops.OperatorSpec(params.lam, grid, bc.temperature)
        self.phase = ops.OperatorSpec(params.nu, grid, Watertight())
        self._cache = {}
        self._static_p = _static(bc.pressure)
        self._static_w = _static(bc.temperature, (sources.Pi,))
        self._coords = grid.centers()
        self._static_R = not callable(sources.R)

    def _cached(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def pressure_at(self, t, p_lag):
        if self._static_p:
            return self._cached("p", lambda: ops.assemble(self.pressure))
        return ops.assemble(self.pressure, t, lagged=p_lag)

    def entropy_at(self, t, theta_lag):
        if self._static_w:
            return self._cached("w", lambda: ops.assemble(self.entropy, flux=self.sources.Pi))
        return ops.assemble(self.entropy, t, lagged=theta_lag, flux=self.sources.Pi)

    def phase_op(self):
        return self._cached("b", lambda: ops.assemble(self.phase))

    def source_at(self, t):
        if self._static_R:
            return self._cached("R", lambda: evaluate(self.sources.R, self._coords, t))
        return evaluate(self.sources.R, self._coords, t)


# ---------------------------------------------------------------------------
# sub-steps


def phase_forcing(p, theta, params: MaterialParams, cfg: StepConfig | None = None, beta=None):
    """Driving force ``(rho1 p + (ell/theta_c)(theta - theta_c), rho2 p)``, minus the well gradient."""
    f1 = params.rho1 * p + params.latent * (theta - params.theta_c)
    f2 = params.rho2 * p
    well = getattr(cfg, "double_well", None)
    if well is not None and beta is not None:
        g1, g2 = well.grad(beta[0], beta[1])
        f1 = f1 - g1
        f2 = f2 - g2
    return f1, f2


def _ops(grid, params, bc, sources, op):
    if op is not None:
        return op
    if grid is None:
        raise ValueError("a grid is required when no operator set is given")
    return Operators(grid, params, bc or BoundaryConfig(), sources or SourceConfig())


def step_pressure(state_old: State, beta_new, cfg: StepConfig, params: MaterialParams, bc=None,
                  grid: Grid | None = None, p_guess=None, op: Operators | None = None, t=None):
    """Implicit mass balance for ``p`` with the fractions ``beta_new`` frozen."""
    op = _ops(grid, params, bc, None, op)
    dt = cfg.dt
    t = state_old.t + dt if t is None else t
    b1, b2 = beta_new
    rhs = (params.k * state_old.p
           - params.rho1 * (b1 - state_old.beta1) - params.rho2 * (b2 - state_old.beta2)) / dt
    lag = state_old.p if p_guess is None else p_guess
    a = op.pressure_at(t, lag)
    return ops.solve_implicit(op.pressure, params.k / dt, rhs, cfg.lin_tol, x0=lag, assembled=a)


def step_entropy(state_old: State, beta1_new, cfg: StepConfig, params: MaterialParams, bc=None,
                 sources: SourceConfig | None = None, grid: Grid | None = None, w_guess=None,
                 op: Operators | None = None, t=None):
    """Implicit entropy balance for ``w`` with ``beta1_new`` frozen."""
    op = _ops(grid, params, bc, sources, op)
    dt = cfg.dt
    t = state_old.t + dt if t is None else t
    rhs = (params.c0 * state_old.w - params.latent * (beta1_new - state_old.beta1)) / dt + op.source_at(t)
    lag = state_old.w if w_guess is None else w_guess
    a = op.entropy_at(t, gamma_sigma(lag, cfg.gamma_cap))
    return ops.solve_implicit(op.entropy, params.c0 / dt, rhs, cfg.lin_tol, x0=lag, assembled=a)


def step_phase(state_old: State, p_new, theta_new, cfg: StepConfig, params: MaterialParams,
               grid: Grid | None = None, beta_lag=None, op: Operators | None = None):
    """Constrained phase relaxation; returns ``((beta1, beta2), (xi1, xi2))``.

    ``xi`` is the multiplier in the normal cone: the Yosida force in Yosida
    mode, the projection correction ``mu (beta_trial - beta) / dt`` otherwise.
    """
    dt = cfg.dt
    a = params.mu / dt
    lag = beta_lag if beta_lag is not None else (state_old.beta1, state_old.beta2)
    f1, f2 = phase_forcing(p_new, theta_new, params, cfg, lag)
    nu = params.nu
    if nu > 0:
        op = _ops(grid, params, None, None, op)
        pa = op.phase_op()
    if cfg.constraint == "projection":
        if nu == 0:
            t1 = state_old.beta1 + f1 / a
            t2 = state_old.beta2 + f2 / a
        else:
            t1 = ops.solve_implicit(op.phase, a, a * state_old.beta1 + f1, cfg.lin_tol, x0=lag[0], assembled=pa)
            t2 = ops.solve_implicit(op.phase, a, a * state_old.beta2 + f2, cfg.lin_tol, x0=lag[1], assembled=pa)
        b1, b2 = project_field(t1, t2)
        return (b1, b2), (a * (t1 - b1), a * (t2 - b2))

    sigma = cfg.sigma
    if nu == 0:
        b1, b2 = yosida_resolvent(state_old.beta1 + f1 / a, state_old.beta2 + f2 / a, 1.0 / a, sigma)
    else:
        # (a + 1/sigma + nu B) beta = a beta_old + F + P(beta_prev) / sigma, contraction 1 / (1 + a sigma)
        b1, b2 = np.array(lag[0], dtype=float), np.array(lag[1], dtype=float)
        tol = cfg.inner_tolerance
        for _ in range(cfg.inner_max):
            q1, q2 = project_field(b1, b2)
            n1 = ops.solve_implicit(op.phase, a + 1.0 / sigma, a * state_old.beta1 + f1 + q1 / sigma,
                                    cfg.lin_tol, x0=b1, assembled=pa)
            n2 = ops.solve_implicit(op.phase, a + 1.0 / sigma, a * state_old.beta2 + f2 + q2 / sigma,
                                    cfg.lin_tol, x0=b2, assembled=pa)
            inc = max(float(np.max(np.abs(n1 - b1))), float(np.max(np.abs(n2 - b2))))
            b1, b2 = n1, n2
            if inc <= tol:
                break
        else:
            raise ConstraintError(
                f"Yosida inner loop did not converge in {cfg.inner_max} sweeps; "
                f"reduce dt or increase sigma")
    q1, q2 = project_field(b1, b2)
    return (b1, b2), ((b1 - q1) / sigma, (b2 - q2) / sigma)


class Anderson:
    """Type-II Anderson mixing for a fixed-point map ``x -> g(x)``."""

    def __init__(self, depth):
        self.depth = depth
        self.xs = []
        self.gs = []

    def update(self, x, g):
        self.xs.append(x)
        self.gs.append(g)
        if len(self.xs) > self.depth + 1:
            self.xs.pop(0)
            self.gs.pop(0)
        if len(self.xs) == 1:
            return g
        f = [gi - xi for gi, xi in zip(self.gs, self.xs)]
        dF = np.stack([f[i + 1] - f[i] for i in range(len(f) - 1)], axis=1)
        dG = np.stack([self.gs[i + 1] - self.gs[i] for i in range(len(f) - 1)], axis=1)
        coef, *_ = np.linalg.lstsq(dF, f[-1], rcond=None)
        return g - dG @ coef


@dataclass
class StepOutcome:
    state: State
    iterations: int
    xi: tuple
    forcing: tuple
    dt: float


def _check_constraint(old: State, new: State, forcing, cfg: StepConfig, params: MaterialParams):
    if not cfg.check_constraint:
        return
    if cfg.constraint == "projection":
        b1, b2 = new.beta1, new.beta2
        if np.any(b1 < 0) or np.any(b2 < 0) or np.any(b1 + b2 > 1.0):
            raise ConstraintError("projection step left the admissible set")
        return
    # prox estimate: dist(beta) <= (sigma |F| + a sigma dist(beta_old)) / (1 + a sigma)
    a_sig = params.mu * cfg.sigma / cfg.dt
    fmax = float(np.max(np.hypot(forcing[0], forcing[1])))
    d_old = float(np.max(dist_K(old.beta1, old.beta2)))
    bound = (cfg.sigma * fmax + a_sig * d_old) / (1.0 + a_sig)
    d_new = float(np.max(dist_K(new.beta1, new.beta2)))
    if d_new > bound * (1.0 + 1e-6) + cfg.picard_tol:
        raise ConstraintError(f"distance to K {d_new:.3e} exceeds the Yosida bound {bound:.3e}")


def coupled_step(state_old: State, cfg: StepConfig, params: MaterialParams, grid: Grid,
                 bc: BoundaryConfig | None = None, sources: SourceConfig | None = None,
                 beta_guess=None, op: Operators | None = None) -> StepOutcome:
    """One backward-Euler step with the full outcome (multiplier, forcing)."""
    bc = bc or BoundaryConfig()
    sources = sources or SourceConfig()
    op = op or Operators(grid, params, bc, sources)
    t_new = state_old.t + cfg.dt
    b1, b2 = (state_old.beta1, state_old.beta2) if beta_guess is None else beta_guess
    b1 = np.array(b1, dtype=float)
    b2 = np.array(b2, dtype=float)
    p, w = state_old.p, state_old.w
    shape = b1.shape
    mixer = Anderson(cfg.anderson_depth) if cfg.acceleration == "anderson" else None
    for it in range(1, cfg.picard_max + 1):
        w_new = step_entropy(state_old, b1, cfg, params, op=op, w_guess=w, t=t_new)
        p_new = step_pressure(state_old, (b1, b2), cfg, params, op=op, p_guess=p, t=t_new)
        theta = gamma_sigma(w_new, cfg.gamma_cap)
        (n1, n2), xi = step_phase(state_old, p_new, theta, cfg, params, op=op, beta_lag=(b1, b2))
        inc = max(float(np.max(np.abs(p_new - p))), float(np.max(np.abs(w_new - w))),
                  float(np.max(np.abs(n1 - b1))), float(np.max(np.abs(n2 - b2))))
        p, w = p_new, w_new
        if not np.isfinite(inc):
            raise PicardError("coupling iteration produced non-finite values")
        if inc <= cfg.picard_tol or mixer is None:
            b1, b2 = n1, n2
            if inc <= cfg.picard_tol:
                break
            continue
        x = mixer.update(np.concatenate([b1.ravel(), b2.ravel()]), np.concatenate([n1.ravel(), n2.ravel()]))
        b1, b2 = x[: b1.size].reshape(shape), x[b1.size:].reshape(shape)
    else:
        raise PicardError(f"coupling iteration did not converge in {cfg.picard_max} iterations "
                          f"(last increment {inc:.3e})")
    w = step_entropy(state_old, b1, cfg, params, op=op, w_guess=w, t=t_new)
    p = step_pressure(state_old, (b1, b2), cfg, params, op=op, p_guess=p, t=t_new)
    new = State(p, w, b1, b2, t_new)
    theta = gamma_sigma(w, cfg.gamma_cap)
    forcing = phase_forcing(p, theta, params, cfg, (b1, b2))
    _check_constraint(state_old, new, forcing, cfg, params)
    return StepOutcome(new, it, xi, forcing, cfg.dt)


def picard_step(state_old: State, cfg: StepConfig, params: MaterialParams, grid: Grid,
                bc: BoundaryConfig | None = None, sources: SourceConfig | None = None, beta_guess=None):
    """One coupled step; returns ``(state, iterations)``."""
    out = coupled_step(state_old, cfg, params, grid, bc, sources, beta_guess)
    return out.state, out.iterations


# ---------------------------------------------------------------------------
# driver


Observer = Callable[[int, float, State, diag.DiagnosticsRecord], None]


def _intake(state, op: Operators):
    a = op.pressure_at(state.t, state.p)
    return 0.0 - ops.boundary_outflow(op.pressure, state.p, assembled=a)


def record_for(old: State, out: StepOutcome, params, cfg, grid, op: Operators) -> diag.DiagnosticsRecord:
    s = out.state
    return diag.DiagnosticsRecord(
        t=s.t,
        mass=diag.total_mass(s, params, grid),
        energy=diag.lyapunov_energy(s, params, cfg, grid),
        dissipation=diag.dissipation(old, s, out.dt, params, cfg, grid),
        min_theta=diag.min_theta(s, cfg),
        vi_residual=diag.vi_residual(s, out.forcing, params, grid, old, out.dt),
        picard_iters=out.iterations,
        boundary_intake=_intake(s, op),
    )


def initial_record(state: State, params, cfg, grid, op: Operators) -> diag.DiagnosticsRecord:
    theta = gamma_sigma(state.w, cfg.gamma_cap)
    forcing = phase_forcing(state.p, theta, params, cfg, (state.beta1, state.beta2))
    return diag.DiagnosticsRecord(
        t=state.t,
        mass=diag.total_mass(state, params, grid),
        energy=diag.lyapunov_energy(state, params, cfg, grid),
        dissipation=diag.dissipation(state, state, 0.0, params, cfg, grid),
        min_theta=diag.min_theta(state, cfg),
        vi_residual=diag.vi_residual(state, forcing, params, grid),
        picard_iters=0,
        boundary_intake=_intake(state, op),
    )


@dataclass
class RunResult:
    state: State
    records: list = field(default_factory=list)
    dt: float = 0.0
    halvings: int = 0
    steps: int = 0


def validate_initial(initial: State, cfg: StepConfig):
    b1, b2 = initial.beta1, initial.beta2
    if np.any(b1 < 0) or np.any(b2 < 0) or np.any(b1 + b2 > 1.0):
        raise ParameterError("initial fractions must lie in the admissible set K")
    if not np.all(np.isfinite(initial.p)) or not np.all(np.isfinite(initial.w)):
        raise ParameterError("initial pressure and temperature must be finite")


def run(initial: State, cfg: StepConfig, params: MaterialParams, grid: Grid, bc: BoundaryConfig | None = None,
        sources: SourceConfig | None = None, t_end: float = 0.0, observers=(), record=True) -> RunResult:
    """Advance to ``t_end``; ``dt`` is halved for good on a failed step, up to ``max_halvings``."""
    bc = bc or BoundaryConfig()
    sources = sources or SourceConfig()
    validate_initial(initial, cfg)
    op = Operators(grid, params, bc, sources)
    state = initial.copy()
    result = RunResult(state, [], cfg.dt)
    if record:
        result.records.append(initial_record(state, params, cfg, grid, op))
    step_cfg = cfg
    halvings = 0
    eps = 1e-12 * max(abs(t_end), 1.0)
    n = 0
    while state.t < t_end - eps:
        dt = min(step_cfg.dt, t_end - state.t)
        trial = step_cfg if dt == step_cfg.dt else step_cfg.replace(dt=dt)
        try:
            out = coupled_step(state, trial, params, grid, bc, sources, op=op)
        except (StepError, ops.SolverError) as exc:
            if halvings >= cfg.max_halvings:
                raise StepError(f"step at t={state.t:g} failed after {halvings} halvings: {exc}") from exc
            halvings += 1
            step_cfg = step_cfg.replace(dt=step_cfg.dt / 2.0)
            log.info("halving dt to %g at t=%g (%s)", step_cfg.dt, state.t, exc)
            continue
        if abs(out.state.t - t_end) <= eps:
            out.state.t = t_end
        n += 1
        rec = record_for(state, out, params, trial, grid, op) if (record or observers) else None
        if rec is not None and rec.min_theta <= 0:
            raise StepError("temperature lost positivity")
        state = out.state
        if record:
            result.records.append(rec)
        for obs in observers:
            obs(n, state.t, state.readonly(), rec)
    result.state = state
    result.dt = step_cfg.dt
    result.halvings = halvings
    result.steps = n
    return result
