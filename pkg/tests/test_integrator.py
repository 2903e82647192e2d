import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasevoid import operators as ops
from phasevoid.constraint import DoubleWell, project_K
from phasevoid.diagnostics import total_mass
from phasevoid.gamma import gamma_sigma
from phasevoid.integrator import (
    Anderson,
    ConstraintError,
    Operators,
    StepConfig,
    StepError,
    coupled_step,
    phase_forcing,
    picard_step,
    run,
    step_phase,
    step_pressure,
)
from phasevoid.model import (
    BoundaryConfig,
    Grid,
    MaterialParams,
    ParameterError,
    Robin,
    SourceConfig,
    State,
)

G1 = Grid((8,), (1.0,))


def wavy(g, b1=0.6, b2=0.3, amp=0.1):
    return State.from_functions(
        g, p=lambda x, t: amp * np.cos(np.pi * x), theta=lambda x, t: 1.0 + 0.05 * np.cos(np.pi * x),
        beta1=b1, beta2=b2)


@pytest.mark.parametrize("kw", [
    {"dt": 0.0}, {"dt": 1e-3, "picard_tol": 0.0}, {"dt": 1e-3, "picard_max": 0},
    {"dt": 1e-3, "constraint": "penalty"}, {"dt": 1e-3, "constraint": "yosida"},
    {"dt": 1e-3, "gamma_cap": -1.0}, {"dt": 1e-3, "acceleration": "newton"},
    {"dt": 1e-3, "max_halvings": -1},
])
def test_step_config_rejects(kw):
    with pytest.raises(ParameterError):
        StepConfig(**kw)


def test_forcing_formula():
    p = MaterialParams(rho1=1.0, rho2=0.9, ell=2.0, theta_c=1.0)
    f1, f2 = phase_forcing(0.5, 0.9, p)
    assert f1 == pytest.approx(0.5 + 2.0 * (0.9 - 1.0))
    assert f2 == pytest.approx(0.45)
    well = DoubleWell()
    cfg = StepConfig(dt=1e-3, double_well=well)
    g1, g2 = phase_forcing(0.0, 1.0, p, cfg, (0.25, 0.0))
    assert g1 == pytest.approx(-2 * 0.25 * 0.75 * 0.5)


def test_pressure_substep_solves_balance():
    g = Grid((6, 5), (1.0,))
    s = State.from_functions(g, p=lambda x, y, t: np.sin(3 * x) * y, theta=1.0, beta1=0.5, beta2=0.2)
    params = MaterialParams(k=0.2, m=0.7)
    cfg = StepConfig(dt=0.05, lin_tol=1e-13)
    b1 = s.beta1 - 0.01
    b2 = s.beta2 + 0.02
    p = step_pressure(s, (b1, b2), cfg, params, grid=g)
    spec = ops.OperatorSpec(params.m, g)
    res = params.k * (p - s.p) / cfg.dt + (params.rho1 * (b1 - s.beta1) + params.rho2 * (b2 - s.beta2)) / cfg.dt \
        + ops.apply(spec, p)
    assert np.max(np.abs(res)) < 1e-9


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.5, 1.5), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_projection_substep_matches_pointwise(p, w, theta, b1, b2):
    if b1 + b2 > 1:
        b1, b2 = b1 / 2, b2 / 2
    g = Grid((2,), (1.0,))
    params = MaterialParams(mu=2.0)
    s = State(g.full(0.0), g.full(w), g.full(b1), g.full(b2))
    cfg = StepConfig(dt=0.1)
    (n1, n2), (x1, x2) = step_phase(s, g.full(p), g.full(theta), cfg, params)
    a = params.mu / cfg.dt
    f1, f2 = phase_forcing(p, theta, params)
    q = project_K((b1 + f1 / a, b2 + f2 / a))
    assert (n1[0], n2[0]) == pytest.approx(q, abs=1e-14)
    # multiplier closes the equation: mu (beta - beta_old)/dt + xi = F
    assert a * (n1[0] - b1) + x1[0] == pytest.approx(f1, abs=1e-10)
    assert a * (n2[0] - b2) + x2[0] == pytest.approx(f2, abs=1e-10)


@pytest.mark.parametrize("nu", [0.0, 0.05])
def test_yosida_substep_equation(nu):
    g = Grid((8,), (1.0,))
    params = MaterialParams(nu=nu)
    s = wavy(g, 0.7, 0.29)
    cfg = StepConfig(dt=0.01, constraint="yosida", sigma=0.05, inner_tol=1e-13, lin_tol=1e-13)
    theta = g.full(0.7)
    p = g.full(0.8)
    (b1, b2), (x1, x2) = step_phase(s, p, theta, cfg, params, grid=g)
    a = params.mu / cfg.dt
    f1, f2 = phase_forcing(p, theta, params)
    spec = ops.OperatorSpec(nu, g)
    r1 = a * (b1 - s.beta1) + ops.apply(spec, b1) + x1 - f1
    r2 = a * (b2 - s.beta2) + ops.apply(spec, b2) + x2 - f2
    assert max(np.abs(r1).max(), np.abs(r2).max()) < 1e-8
    assert np.all(np.hypot(x1, x2) > 0)  # pushed outside K, multiplier active


def test_yosida_inner_loop_cap():
    g = Grid((8,), (1.0,))
    params = MaterialParams(nu=0.05)
    cfg = StepConfig(dt=1.0, constraint="yosida", sigma=10.0, inner_max=2, inner_tol=1e-15)
    with pytest.raises(ConstraintError):
        step_phase(wavy(g), g.full(5.0), g.full(0.5), cfg, params, grid=g)


def test_projection_with_diffusion_stays_in_K():
    g = Grid((8,), (1.0,))
    params = MaterialParams(nu=0.1)
    s = State.from_functions(g, p=0.0, theta=1.0, beta1=lambda x, t: x, beta2=lambda x, t: 1 - x)
    cfg = StepConfig(dt=0.1)
    (b1, b2), _ = step_phase(s, g.full(3.0), g.full(1.0), cfg, params, grid=g)
    assert np.all(b1 >= 0) and np.all(b2 >= 0) and np.all(b1 + b2 <= 1.0)


def test_missing_grid():
    with pytest.raises(ValueError, match="grid"):
        step_pressure(State.uniform(G1), (G1.full(1.0), G1.zeros()), StepConfig(dt=1e-3), MaterialParams())


@pytest.mark.parametrize("constraint, sigma", [("projection", None), ("yosida", 0.01)])
@pytest.mark.parametrize("acceleration", ["none", "anderson"])
def test_coupled_step_is_a_fixed_point(constraint, sigma, acceleration):
    g = Grid((6, 4), (1.0,))
    params = MaterialParams(k=0.1, nu=0.02)
    s = State.from_functions(g, p=lambda x, y, t: 0.2 * np.cos(np.pi * x), theta=0.95,
                             beta1=lambda x, y, t: 0.5 + 0.4 * np.cos(np.pi * y), beta2=0.1)
    cfg = StepConfig(dt=2e-3, constraint=constraint, sigma=sigma, picard_tol=1e-12, lin_tol=1e-13,
                     inner_tol=1e-13, acceleration=acceleration)
    out = coupled_step(s, cfg, params, g)
    n = out.state
    dt = cfg.dt
    # every equation of the discrete system holds at the returned state
    P = ops.OperatorSpec(params.m, g)
    W = ops.OperatorSpec(params.lam, g, BoundaryConfig().temperature)
    B = ops.OperatorSpec(params.nu, g)
    rp = params.k * (n.p - s.p) / dt + (params.rho1 * (n.beta1 - s.beta1) + params.rho2 * (n.beta2 - s.beta2)) / dt \
        + ops.apply(P, n.p)
    rw = params.c0 * (n.w - s.w) / dt + params.latent * (n.beta1 - s.beta1) / dt + ops.apply(W, n.w)
    (q1, q2), (x1, x2) = step_phase(s, n.p, gamma_sigma(n.w), cfg, params, grid=g, beta_lag=(n.beta1, n.beta2))
    assert np.abs(rp).max() < 1e-7 and np.abs(rw).max() < 1e-7
    assert np.abs(q1 - n.beta1).max() < 1e-9 and np.abs(q2 - n.beta2).max() < 1e-9
    assert out.iterations >= 2


def test_picard_step_returns_state_and_count():
    st_, its = picard_step(wavy(G1), StepConfig(dt=1e-3), MaterialParams(), G1)
    assert st_.t == pytest.approx(1e-3) and its >= 1


def test_anderson_accelerates_linear_map():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((5, 5))
    M *= 0.95 / np.abs(np.linalg.eigvals(M)).max()
    c = rng.standard_normal(5)
    fixed = np.linalg.solve(np.eye(5) - M, c)

    def iterate(mixer, n):
        x = np.zeros(5)
        for _ in range(n):
            g = M @ x + c
            x = mixer.update(x, g) if mixer else g
        return np.linalg.norm(x - fixed)

    assert iterate(Anderson(5), 12) < 1e-3 * iterate(None, 12)


def test_run_zero_horizon_returns_initial():
    s = wavy(G1)
    res = run(s, StepConfig(dt=1e-3), MaterialParams(), G1, t_end=0.0)
    assert res.state == s and res.steps == 0 and len(res.records) == 1


def test_run_hits_t_end_exactly():
    res = run(wavy(G1), StepConfig(dt=0.03), MaterialParams(), G1, t_end=0.1)
    assert res.state.t == 0.1 and res.steps == 4


def test_run_rejects_inadmissible_initial():
    s = State.uniform(G1, beta1=0.8, beta2=0.3)
    with pytest.raises(ParameterError):
        run(s, StepConfig(dt=1e-3), MaterialParams(), G1, t_end=0.1)


def test_halving_then_failure():
    s = wavy(G1, amp=1.0)
    params = MaterialParams(k=1e-3)
    cfg = StepConfig(dt=0.1, picard_max=2, max_halvings=0)
    with pytest.raises(StepError, match="halvings"):
        run(s, cfg, params, G1, t_end=0.1)
    res = run(s, cfg.replace(picard_max=50, max_halvings=12), params, G1, t_end=0.1)
    assert res.halvings > 0 and res.dt == pytest.approx(0.1 / 2 ** res.halvings)


def test_observers_receive_readonly_states():
    seen = []

    def obs(n, t, state, rec):
        seen.append((n, t, rec.picard_iters))
        with pytest.raises(ValueError):
            state.p[0] = 1.0

    run(wavy(G1), StepConfig(dt=0.01), MaterialParams(), G1, t_end=0.03, observers=[obs])
    assert [n for n, _, _ in seen] == [1, 2, 3]


def test_run_is_deterministic():
    a = run(wavy(G1), StepConfig(dt=0.01), MaterialParams(k=0.1), G1, t_end=0.05)
    b = run(wavy(G1), StepConfig(dt=0.01), MaterialParams(k=0.1), G1, t_end=0.05)
    assert a.state == b.state
    assert [r.row() for r in a.records] == [r.row() for r in b.records]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_watertight_mass_conserved(seed):
    rng = np.random.default_rng(seed)
    g = Grid((10,), (1.0,))
    b = rng.dirichlet([1, 1, 1], size=g.shape)
    s = State(rng.normal(0, 0.2, g.shape), np.log(rng.uniform(0.9, 1.1, g.shape)), b[:, 0].copy(), b[:, 1].copy())
    params = MaterialParams(k=0.1)
    res = run(s, StepConfig(dt=2e-3), params, g, t_end=0.02)
    m0 = total_mass(s, params, g)
    assert all(abs(r.mass - m0) <= 1e-10 * max(1.0, abs(m0)) for r in res.records)


def test_robin_intake_matches_mass_change():
    g = Grid((12,), (1.0,))
    params = MaterialParams(k=0.5)
    bc = BoundaryConfig(pressure=Robin(alpha=2.0, ext=0.3))
    s = State.uniform(g, p=0.0, beta1=0.6, beta2=0.3)
    cfg = StepConfig(dt=0.01, lin_tol=1e-13, picard_tol=1e-12)
    res = run(s, cfg, params, g, bc=bc, t_end=0.1)
    # M(n+1) - M(n) = dt * intake(n+1) for backward Euler
    for a, b in zip(res.records, res.records[1:]):
        assert b.mass - a.mass == pytest.approx(cfg.dt * b.boundary_intake, rel=1e-7, abs=1e-13)
    assert res.records[-1].boundary_intake > 0


def test_time_dependent_sources_are_reassembled():
    g = Grid((4,), (1.0,))
    src = SourceConfig(R=lambda x, t: -1.0 if t > 0.05 else 0.0)
    op = Operators(g, MaterialParams(), BoundaryConfig(), src)
    assert np.all(op.source_at(0.01) == 0.0) and np.all(op.source_at(0.07) == -1.0)
