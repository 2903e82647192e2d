import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phasevoid import scenarios as sc
from phasevoid.model import MaterialParams, ParameterError

UNIT = MaterialParams(rho1=1.0, rho2=0.9)


def test_bottle_oracle_substitution():
    assert sc.bottle_freeze_oracle(UNIT, 0.95) == pytest.approx(0.5)
    assert sc.bottle_freeze_oracle(UNIT, 1.0) == 0.0
    p = MaterialParams(rho1=1.2, rho2=1.0, ell=3.0, theta_c=2.0)
    assert sc.bottle_freeze_oracle(p, 1.9) == pytest.approx(1.5 * 0.1 / 0.2)
    with pytest.raises(ParameterError):
        sc.bottle_freeze_oracle(UNIT, 1.01)


def test_emulsion_oracle_branches():
    assert sc.emulsion_oracle(UNIT, 0.95) == pytest.approx((0.5, 0.5))
    assert sc.emulsion_oracle(UNIT, 0.9) == pytest.approx((0.0, 1.0))
    # void branch: all liquid mass becomes solid, rho2 beta2 = rho1 beta1_0
    assert sc.emulsion_oracle(UNIT, 0.45) == pytest.approx((0.0, 0.5))
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ParameterError):
            sc.emulsion_oracle(UNIT, bad)


@given(st.floats(0.01, 0.99))
def test_emulsion_oracle_conserves_mass_and_lands_on_edge(b0):
    b1, b2 = sc.emulsion_oracle(UNIT, b0)
    assert UNIT.rho1 * b1 + UNIT.rho2 * b2 == pytest.approx(UNIT.rho1 * b0)
    assert b1 >= -1e-15 and b2 >= 0 and b1 + b2 <= 1 + 1e-12
    assert b1 == 0 or b1 + b2 == pytest.approx(1.0)


def test_glacier_relation():
    assert sc.glacier_relation(UNIT, 0.0) == 1.0
    # rho1 - rho2 = 0.1, ell/theta_c = 1, theta - theta_c = -0.02 -> p = 0.2
    assert sc.glacier_relation(UNIT, 0.2) == pytest.approx(0.98)
    with pytest.raises(ValueError):
        sc.glacier_relation(UNIT, -1e-9)


@given(st.floats(0, 5), st.floats(0, 5))
def test_glacier_curve_decreasing(a, b):
    lo, hi = sorted((a, b))
    assert sc.glacier_relation(UNIT, hi) <= sc.glacier_relation(UNIT, lo)


def test_curve_points_satisfy_both_equations():
    for p, theta in sc.glacier_points(UNIT, 5, 1.0):
        # the two components of the forcing coincide on the saturated edge
        f1 = UNIT.rho1 * p + UNIT.latent * (theta - UNIT.theta_c)
        assert f1 == pytest.approx(UNIT.rho2 * p, abs=1e-14)


def test_builders_validate():
    with pytest.raises(ParameterError):
        sc.bottle_freeze(undercool=1.5)
    with pytest.raises(ParameterError):
        sc.bottle_freeze(rho1=0.8)
    spec = sc.emulsion_freeze(0.45)
    assert spec.t_end > spec.settings["hold"]
    assert spec.step.acceleration == "anderson"


def test_bottle_sink_reaches_target_temperature():
    spec = sc.bottle_freeze(undercool=0.05)
    R = spec.sources.R
    total = sum(v * (b - a) for a, b, v in zip(R.times, R.times[1:], R.values))
    # c0 log(theta_f / theta_c) minus the latent share of the O(k) frozen fraction
    s_frozen = spec.params.k * 0.5 / 0.1
    assert total == pytest.approx(math.log(0.95) - s_frozen)


def test_glacier_report():
    rep = sc.run_glacier(n=4)
    assert rep.passed
    assert rep.checks["points"] == 4 and rep.checks["signs_ok"]
    assert rep.measured <= 1e-8


def test_report_lines_and_json():
    rep = sc.run_glacier(n=2)
    lines = rep.lines()
    assert lines[0] == "scenario glacier-equilibrium" and lines[-1].strip() == "PASS"
    json.dumps(rep.as_dict(), default=str)


def test_run_preset_dispatch():
    with pytest.raises(KeyError):
        sc.run_preset("avalanche")
    rep = sc.run_preset("glacier-equilibrium", n=2, material={"k": 0.01})
    assert rep.config["params"]["k"] == 0.01


def test_short_bottle_run_builds_pressure():
    rep = sc.run_bottle(sc.bottle_freeze(dt=2e-3, ramp=0.2, hold=0.3))
    assert rep.measured > 0.3
    assert rep.checks["mass_drift"] < 1e-10
    assert rep.checks["beta_final"][0] > 0.99
