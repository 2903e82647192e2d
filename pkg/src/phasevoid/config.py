"""Run configuration: YAML file -> validated, canonical dictionary -> domain objects.

Every key has a documented default (see ``reference_markdown``). Unknown keys
are rejected, and the canonical form re-parses to itself.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .constraint import DoubleWell
from .integrator import StepConfig
from .model import (
    BoundaryConfig,
    Dirichlet,
    EntropyFlux,
    Grid,
    MaterialParams,
    ParameterError,
    PiecewiseConstant,
    Ramp,
    Robin,
    SemiPermeable,
    SourceConfig,
    State,
    ThetaRobin,
    Watertight,
    mixture_compressibility,
)


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


MODES = ("simulate", "manufactured")
SCENARIOS = ("bottle-freeze", "emulsion-freeze", "glacier-equilibrium")
PRESSURE_LAWS = ("watertight", "robin", "dirichlet", "semipermeable")
TEMPERATURE_LAWS = ("entropy_flux", "theta_robin")

# section -> key -> (default, description); ``None`` default means optional
SCHEMA = {
    "material": {
        "rho1": (1.0, "liquid density, must exceed rho2"),
        "rho2": (0.9, "solid density, positive"),
        "k": (1.0, "mixture compressibility; derived from k1, k2, beta_ref when those are given"),
        "k1": (None, "liquid compressibility (optional, with k2 and beta_ref)"),
        "k2": (None, "solid compressibility (optional)"),
        "beta_ref": (None, "reference fractions [b1, b2] for the mixture compressibility"),
        "m": (1.0, "Darcy mobility"),
        "c0": (1.0, "specific heat"),
        "lam": (1.0, "heat conductivity"),
        "ell": (1.0, "latent heat"),
        "theta_c": (1.0, "critical (melting) temperature"),
        "mu": (1.0, "phase-change viscosity"),
        "nu": (0.0, "interfacial energy coefficient, >= 0"),
    },
    "grid": {
        "n": ([32], "cells per axis, one entry per dimension (1 or 2 entries)"),
        "extent": ([1.0], "physical length per axis; a single value applies to all axes"),
    },
    "initial": {
        "p": (0.0, "pressure: a number or {mean, amplitude, mode}"),
        "theta": (1.0, "temperature (positive): a number or {mean, amplitude, mode}"),
        "beta1": (1.0, "liquid fraction: a number or {mean, amplitude, mode}"),
        "beta2": (0.0, "solid fraction: a number or {mean, amplitude, mode}"),
    },
    "bc": {
        "pressure": ({"law": "watertight"}, "law: watertight | robin | dirichlet | semipermeable, "
                                            "with alpha and ext where relevant"),
        "temperature": ({"law": "entropy_flux", "alpha": 0.0},
                        "law: entropy_flux (alpha, flux from sources.Pi) | theta_robin (alpha, theta_ext)"),
    },
    "sources": {
        "R": (0.0, "entropy source: a number, {ramp: {start, end, t0, t1}} or {series: {times, values}}"),
        "Pi": (0.0, "boundary entropy flux, same forms as R"),
    },
    "stepping": {
        "dt": (1e-3, "time step"),
        "t_end": (0.1, "final time"),
        "picard_tol": (1e-10, "coupling iteration tolerance on the max increment"),
        "picard_max": (200, "coupling iteration cap"),
        "constraint": ("projection", "projection | yosida"),
        "sigma": (None, "Yosida parameter, required in yosida mode"),
        "lin_tol": (1e-10, "relative tolerance of the linear solver"),
        "gamma_cap": (30.0, "cap of the truncated exponential"),
        "max_halvings": (10, "permanent dt halvings allowed on step failure"),
        "acceleration": ("none", "none | anderson (mixing of the coupling iteration)"),
        "anderson_depth": (3, "history length for anderson"),
        "double_well": (None, "optional {scale, coeffs} smooth non-convex term"),
    },
    "output": {
        "dir": ("runs/out", "output directory"),
        "snapshot_every": (0, "write a field snapshot every N steps (0: initial and final only)"),
        "diagnostics": ("diagnostics.csv", "diagnostics file name inside dir"),
    },
    "scenario": {
        "name": (None, "preset: bottle-freeze | emulsion-freeze | glacier-equilibrium"),
        "options": ({}, "keyword overrides passed to the preset builder"),
    },
}
TOP_LEVEL = ("mode", "material", "grid", "initial", "bc", "sources", "stepping", "output", "scenario")
REQUIRED = ("material", "grid")


def _num(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where} must be a finite number, got {v!r}")
    return float(v)


def _int(v, where):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where} must be an integer, got {v!r}")
    return v


def _keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"section '{where}' must be a mapping")
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) {extra} in '{where}'")


def _data(v, where):
    """Normalize a source/initial datum: number or tagged mapping."""
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return _num(v, where)
    if isinstance(v, dict) and len(v) == 1:
        (tag, body), = v.items()
        if tag == "ramp":
            _keys(body, ("start", "end", "t0", "t1"), f"{where}.ramp")
            return {"ramp": {k: _num(body.get(k, 0.0 if k != "t1" else 1.0), f"{where}.ramp.{k}")
                             for k in ("start", "end", "t0", "t1")}}
        if tag == "series":
            _keys(body, ("times", "values"), f"{where}.series")
            return {"series": {"times": [_num(x, f"{where}.series.times") for x in body.get("times", [])],
                               "values": [_num(x, f"{where}.series.values") for x in body.get("values", [])]}}
    raise ConfigError(f"{where} must be a number, {{ramp: ...}} or {{series: ...}}")


def _profile(v, where):
    if isinstance(v, dict):
        _keys(v, ("mean", "amplitude", "mode"), where)
        mode = v.get("mode", [1])
        mode = [int(_num(x, f"{where}.mode")) for x in (mode if isinstance(mode, list) else [mode])]
        return {"mean": _num(v.get("mean", 0.0), f"{where}.mean"),
                "amplitude": _num(v.get("amplitude", 0.0), f"{where}.amplitude"), "mode": mode}
    return _num(v, where)


def _law(v, laws, where):
    if not isinstance(v, dict) or "law" not in v:
        raise ConfigError(f"{where} must be a mapping with a 'law' key")
    law = v["law"]
    if law not in laws:
        raise ConfigError(f"{where}.law must be one of {laws}, got {law!r}")
    keys = {"watertight": (), "robin": ("alpha", "ext"), "dirichlet": ("ext",),
            "semipermeable": ("alpha", "ext"), "entropy_flux": ("alpha",),
            "theta_robin": ("alpha", "theta_ext")}[law]
    _keys(v, ("law",) + keys, where)
    out = {"law": law}
    defaults = {"alpha": 0.0, "ext": 0.0, "theta_ext": 1.0}
    for k in keys:
        out[k] = _num(v.get(k, defaults[k]), f"{where}.{k}")
        if k == "alpha" and out[k] < 0:
            raise ConfigError(f"{where}.alpha must be >= 0")
    return out


def normalize(raw) -> dict:
    """Validate a raw mapping and return the canonical configuration dictionary."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    extra = sorted(set(raw) - set(TOP_LEVEL))
    if extra:
        raise ConfigError(f"unknown section(s) {extra}")
    out = {"mode": raw.get("mode", "simulate")}
    if out["mode"] not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    scen = raw.get("scenario")
    if isinstance(scen, str):
        scen = {"name": scen}
    if scen is not None:
        _keys(scen, SCHEMA["scenario"], "scenario")
        if scen.get("name") not in SCENARIOS:
            raise ConfigError(f"scenario.name must be one of {SCENARIOS}")
        opts = scen.get("options", {}) or {}
        if not isinstance(opts, dict):
            raise ConfigError("scenario.options must be a mapping")
        out["scenario"] = {"name": scen["name"], "options": copy.deepcopy(opts)}
    else:
        for sec in REQUIRED:
            if sec not in raw:
                raise ConfigError(f"missing required section '{sec}'")

    for sec in ("material", "grid", "initial", "bc", "sources", "stepping", "output"):
        body = raw.get(sec, {}) or {}
        _keys(body, SCHEMA[sec], sec)
        norm = {}
        for key, (default, _) in SCHEMA[sec].items():
            v = body.get(key, copy.deepcopy(default))
            where = f"{sec}.{key}"
            if sec == "material":
                if v is not None:
                    v = [_num(x, where) for x in v] if key == "beta_ref" else _num(v, where)
            elif sec == "grid":
                v = v if isinstance(v, list) else [v]
                v = [_int(x, where) for x in v] if key == "n" else [_num(x, where) for x in v]
            elif sec == "initial":
                v = _profile(v, where)
            elif sec == "bc":
                v = _law(v, PRESSURE_LAWS if key == "pressure" else TEMPERATURE_LAWS, where)
            elif sec == "sources":
                v = _data(v, where)
            elif sec == "stepping":
                if key in ("picard_max", "max_halvings", "anderson_depth"):
                    v = _int(v, where)
                elif key in ("constraint", "acceleration"):
                    v = str(v)
                elif key == "double_well":
                    if v is not None:
                        _keys(v, ("scale", "coeffs"), where)
                        v = {"scale": _num(v.get("scale", 1.0), f"{where}.scale"),
                             "coeffs": [_num(c, f"{where}.coeffs") for c in v.get("coeffs", [0, 0, 1, -2, 1])]}
                elif v is not None:
                    v = _num(v, where)
            elif sec == "output":
                v = _int(v, where) if key == "snapshot_every" else str(v)
            norm[key] = v
        out[sec] = norm
    cfg = out
    build(cfg)  # semantic validation
    return cfg


# ---------------------------------------------------------------------------
# building domain objects


def _series(v):
    if isinstance(v, float):
        return v
    if "ramp" in v:
        r = v["ramp"]
        return Ramp(r["start"], r["end"], r["t0"], r["t1"])
    s = v["series"]
    return PiecewiseConstant(tuple(s["times"]), tuple(s["values"]))


def _profile_fn(v, grid: Grid):
    if isinstance(v, float):
        return v
    mean, amp, mode = v["mean"], v["amplitude"], list(v["mode"])
    mode = (mode + [0] * grid.dim)[: grid.dim]
    ext = grid.extent

    def f(*args):
        xs = args[:-1]
        val = np.ones_like(xs[0])
        for x, kk, L in zip(xs, mode, ext):
            val = val * np.cos(kk * np.pi * x / L)
        return mean + amp * val
    return f


def _pressure_law(d):
    law = d["law"]
    if law == "watertight":
        return Watertight()
    if law == "robin":
        return Robin(d["alpha"], d["ext"])
    if law == "dirichlet":
        return Dirichlet(d["ext"])
    return SemiPermeable(d["alpha"], d["ext"])


def _temperature_law(d):
    if d["law"] == "entropy_flux":
        return EntropyFlux(d["alpha"])
    return ThetaRobin(d["alpha"], d["theta_ext"])


@dataclass
class RunConfig:
    mode: str
    params: MaterialParams
    grid: Grid
    initial: State
    bc: BoundaryConfig
    sources: SourceConfig
    step: StepConfig
    t_end: float
    output: dict
    scenario: dict | None
    canonical: dict


def build(cfg: dict) -> RunConfig:
    """Construct domain objects from a canonical dictionary; raises ``ConfigError``."""
    try:
        mat = dict(cfg["material"])
        k1, k2, bref = mat.pop("k1"), mat.pop("k2"), mat.pop("beta_ref")
        if k1 is not None or k2 is not None:
            if k1 is None or k2 is None or bref is None:
                raise ConfigError("material.k1, material.k2 and material.beta_ref go together")
            mat["k"] = mixture_compressibility(k1, k2, bref)
        params = MaterialParams(**mat)
        g = cfg["grid"]
        grid = Grid(tuple(g["n"]), tuple(g["extent"]))
        ini = cfg["initial"]
        state = State.from_functions(grid, *(_profile_fn(ini[f], grid) for f in ("p", "theta", "beta1", "beta2")))
        b1, b2 = state.beta1, state.beta2
        if np.any(b1 < 0) or np.any(b2 < 0) or np.any(b1 + b2 > 1.0):
            raise ConfigError("initial fractions must lie in the admissible set K "
                              "(beta1 >= 0, beta2 >= 0, beta1 + beta2 <= 1)")
        bc = BoundaryConfig(_pressure_law(cfg["bc"]["pressure"]), _temperature_law(cfg["bc"]["temperature"]))
        src = SourceConfig(_series(cfg["sources"]["R"]), _series(cfg["sources"]["Pi"]))
        st = dict(cfg["stepping"])
        t_end = st.pop("t_end")
        if not t_end >= 0:
            raise ConfigError("stepping.t_end must be >= 0")
        dw = st.pop("double_well")
        step = StepConfig(**st, double_well=DoubleWell(dw["scale"], tuple(dw["coeffs"])) if dw else None)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(cfg["mode"], params, grid, state, bc, src, step, t_end, cfg["output"],
                     cfg.get("scenario"), cfg)


def loads(text: str) -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML parse error: {exc}") from exc
    return build(normalize(raw))


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def dumps(cfg: RunConfig | dict) -> str:
    d = cfg.canonical if isinstance(cfg, RunConfig) else cfg
    return yaml.safe_dump(d, sort_keys=True, default_flow_style=False)


def reference_markdown() -> str:
    """Generated reference of every configuration key and default."""
    lines = ["# Configuration reference", "",
             "Generated from `phasevoid.config.SCHEMA`; regenerate with `phasevoid config-reference`.", "",
             f"Top-level keys: {', '.join('`' + k + '`' for k in TOP_LEVEL)}. "
             f"`mode` is one of {', '.join('`' + m + '`' for m in MODES)} (default `simulate`). "
             f"Sections {', '.join('`' + s + '`' for s in REQUIRED)} are required unless `scenario` is set.", ""]
    for sec, keys in SCHEMA.items():
        lines += [f"## `{sec}`", "", "| key | default | meaning |", "|---|---|---|"]
        for k, (default, desc) in keys.items():
            shown = "none" if default is None else f"`{yaml.safe_dump(default, default_flow_style=True).strip()}`"
            shown = shown.replace("\n...", "")
            lines.append(f"| `{k}` | {shown} | {desc} |")
        lines.append("")
    return "\n".join(lines)
