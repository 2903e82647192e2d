import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from phasevoid import config
from phasevoid.config import ConfigError
from phasevoid.model import PiecewiseConstant, Ramp, Robin, ThetaRobin

BASE = {"material": {"k": 0.1}, "grid": {"n": [8]}}


def with_(**sections):
    d = {k: dict(v) for k, v in BASE.items()}
    d.update(sections)
    return d


def test_defaults_fill_every_key():
    canon = config.normalize(BASE)
    for sec, keys in config.SCHEMA.items():
        if sec == "scenario":
            continue
        assert set(canon[sec]) == set(keys)
    assert canon["stepping"]["dt"] == 1e-3


def test_roundtrip_echo():
    canon = config.normalize(with_(bc={"pressure": {"law": "robin", "alpha": 2}},
                                   sources={"R": {"series": {"times": [0, 1, 2], "values": [-1, 0]}}}))
    again = config.normalize(yaml.safe_load(config.dumps(canon)))
    assert again == canon


@settings(max_examples=30, deadline=None)
@given(dt=st.floats(1e-5, 1.0), n=st.integers(2, 40), b1=st.floats(0, 1), k=st.floats(1e-4, 10))
def test_echo_reparses_equal(dt, n, b1, k):
    raw = {"material": {"k": k}, "grid": {"n": [n, n]}, "stepping": {"dt": dt},
           "initial": {"beta1": b1, "beta2": (1 - b1) / 2}}
    canon = config.normalize(raw)
    assert config.normalize(yaml.safe_load(config.dumps(canon))) == canon


@pytest.mark.parametrize("raw, match", [
    ({"grid": {"n": [4]}}, "material"),
    ({"material": {}}, "grid"),
    (with_(material={"rho1": 0.9, "rho2": 1.0}), "rho1 > rho2"),
    (with_(material={"rho2": 1.0}), "rho1 > rho2"),
    (with_(initial={"beta1": 0.7, "beta2": 0.5}), "admissible set K"),
    (with_(initial={"beta1": -0.1}), "admissible set K"),
    (with_(colour="blue"), "unknown section"),
    (with_(material={"kk": 1}), "unknown key"),
    (with_(stepping={"dt": "fast"}), "finite number"),
    (with_(stepping={"constraint": "yosida"}), "sigma"),
    (with_(stepping={"t_end": -1}), "t_end"),
    (with_(bc={"pressure": {"law": "leaky"}}), "law"),
    (with_(bc={"pressure": {"law": "robin", "alpha": -1}}), "alpha"),
    (with_(sources={"R": {"wave": 1}}), "ramp"),
    (with_(grid={"n": [4, 4, 4]}), "1-D and 2-D"),
    (with_(grid={"n": [4.5]}), "integer"),
    (with_(initial={"theta": 0.0}), "temperature"),
    (with_(material={"k1": 1.0}), "go together"),
    ({"scenario": {"name": "volcano"}}, "scenario.name"),
    ({"mode": "fly", **BASE}, "mode"),
    ([1, 2], "mapping"),
])
def test_rejects(raw, match):
    with pytest.raises(ConfigError, match=match):
        config.normalize(raw)


def test_scenario_needs_no_sections():
    canon = config.normalize({"scenario": "bottle-freeze"})
    assert canon["scenario"] == {"name": "bottle-freeze", "options": {}}


def test_build_objects():
    cfg = config.build(config.normalize(with_(
        grid={"n": [4, 6], "extent": [2.0]},
        initial={"p": {"mean": 1.0, "amplitude": 0.5, "mode": [1, 0]}, "beta1": 0.6, "beta2": 0.2},
        bc={"pressure": {"law": "robin", "alpha": 3, "ext": 0.5},
            "temperature": {"law": "theta_robin", "alpha": 1.0}},
        sources={"R": {"ramp": {"start": 0, "end": -1, "t0": 0, "t1": 2}},
                 "Pi": {"series": {"times": [0, 1], "values": [2]}}},
        stepping={"constraint": "yosida", "sigma": 0.01, "double_well": {"scale": 0.5}},
    )))
    assert cfg.grid.extent == (2.0, 2.0)
    x = cfg.grid.centers()[0]
    assert np.allclose(cfg.initial.p, 1.0 + 0.5 * np.cos(np.pi * x / 2.0))
    assert cfg.bc.pressure == Robin(3.0, 0.5)
    assert isinstance(cfg.bc.temperature, ThetaRobin)
    assert isinstance(cfg.sources.R, Ramp) and isinstance(cfg.sources.Pi, PiecewiseConstant)
    assert cfg.step.sigma == 0.01 and cfg.step.double_well.scale == 0.5


def test_mixture_compressibility_from_phases():
    cfg = config.loads(yaml.safe_dump(with_(material={"k1": 2.0, "k2": 4.0, "beta_ref": [0.5, 0.5]})))
    assert cfg.params.k == pytest.approx(0.375)


def test_yaml_errors():
    with pytest.raises(ConfigError, match="YAML"):
        config.loads("material: [unclosed")
    with pytest.raises(ConfigError, match="cannot read"):
        config.load("/nonexistent/run.yaml")


def test_reference_covers_schema():
    text = config.reference_markdown()
    for sec, keys in config.SCHEMA.items():
        assert f"## `{sec}`" in text
        for k in keys:
            assert f"| `{k}` |" in text
