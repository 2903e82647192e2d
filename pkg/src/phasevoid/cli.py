"""``phasevoid`` command line: run, sweep, validate, scenarios.

Exit codes: 0 success, 1 oracle check failed, 2 configuration error, 3 step
failure. Errors are printed to stderr as one JSON object per line.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, config, scenarios, studies
from . import operators as ops
from .diagnostics import DiagnosticsWriter
from .integrator import Operators, StepError, initial_record, run
from .model import write_snapshot

EXIT_OK, EXIT_ORACLE, EXIT_CONFIG, EXIT_STEP = 0, 1, 2, 3

log = logging.getLogger("phasevoid")


def _error(kind, msg, code):
    print(json.dumps({"error": kind, "message": msg, "exit": code}), file=sys.stderr)
    return code


def _out_dir(cfg, args):
    out = Path(args.out or cfg.output["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_record(rec):
    print("final " + " ".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}"
                              for k, v in rec.as_dict().items()))


def _run_scenario(cfg, out):
    name = cfg.scenario["name"]
    opts = dict(cfg.scenario["options"])
    try:
        report = scenarios.run_preset(name, **opts)
    except TypeError as exc:
        return _error("config", f"bad scenario option for {name}: {exc}", EXIT_CONFIG)
    for line in report.lines():
        print(line)
    (out / "report.json").write_text(json.dumps(report.as_dict(), indent=2, default=str) + "\n", encoding="utf-8")
    res = report.result
    if hasattr(res, "records") and res.records:
        with open(out / cfg.output["diagnostics"], "w", encoding="utf-8", newline="") as f:
            w = DiagnosticsWriter(f)
            for rec in res.records:
                w.write(rec)
        _print_record(res.records[-1])
    return EXIT_OK if report.passed else EXIT_ORACLE


def _run_manufactured(cfg, out):
    err = studies.manufactured_error(cfg.grid, cfg.params.m, cfg.params.k / cfg.step.dt)
    print(f"manufactured n={list(cfg.grid.n)} l2_error={err!r}")
    (out / "manufactured.csv").write_text(f"n,l2_error\n{cfg.grid.n[0]},{err!r}\n", encoding="utf-8")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = config.load(args.config)
    out = _out_dir(cfg, args)
    (out / "config.yaml").write_text(config.dumps(cfg), encoding="utf-8")
    if cfg.scenario:
        return _run_scenario(cfg, out)
    if cfg.mode == "manufactured":
        return _run_manufactured(cfg, out)
    every = args.snapshot_every if args.snapshot_every is not None else cfg.output["snapshot_every"]
    write_snapshot(out / "snapshot_000000.csv", cfg.initial, cfg.grid)
    first = initial_record(cfg.initial, cfg.params, cfg.step, cfg.grid,
                           Operators(cfg.grid, cfg.params, cfg.bc, cfg.sources))
    last = {"rec": first, "n": 0}
    with open(out / cfg.output["diagnostics"], "w", encoding="utf-8", newline="") as f:
        writer = DiagnosticsWriter(f)
        writer.write(first)

        def observe(n, t, state, rec):
            writer.write(rec)
            last["rec"], last["n"] = rec, n
            if every and n % every == 0:
                write_snapshot(out / f"snapshot_{n:06d}.csv", state, cfg.grid)

        result = run(cfg.initial, cfg.step, cfg.params, cfg.grid, cfg.bc, cfg.sources, cfg.t_end,
                     observers=[observe], record=False)
    final = result.state
    if not (every and last["n"] and last["n"] % every == 0):
        write_snapshot(out / f"snapshot_{last['n']:06d}.csv", final, cfg.grid)
    _print_record(last["rec"])
    if result.halvings:
        print(f"dt halved {result.halvings} time(s), final dt={result.dt!r}")
    return EXIT_OK


def _values(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise config.ConfigError(f"--values must be a comma-separated list of numbers: {exc}") from exc


def cmd_sweep(args) -> int:
    cfg = config.load(args.config)
    out = _out_dir(cfg, args)
    table = studies.sweep(cfg, args.axis, _values(args.values))
    text = table.csv()
    (out / f"sweep_{args.axis}.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    failed = [r for r in table.rows if str(r.get("status", "")).startswith("failed")]
    for r in failed:
        _error("step", f"leg {r['value']}: {r['status']}", EXIT_STEP)
    return EXIT_OK if len(failed) < len(table.rows) else EXIT_STEP


def cmd_validate(args) -> int:
    cfg = config.load(args.config)
    sys.stdout.write(config.dumps(cfg))
    return EXIT_OK


def cmd_scenarios(args) -> int:
    if args.run:
        if args.run not in scenarios.PRESETS:
            return _error("config", f"unknown scenario {args.run!r}; have {sorted(scenarios.PRESETS)}", EXIT_CONFIG)
        report = scenarios.run_preset(args.run)
        for line in report.lines():
            print(line)
        return EXIT_OK if report.passed else EXIT_ORACLE
    for name, (desc, _) in scenarios.PRESETS.items():
        print(f"{name:22s} {desc}")
    return EXIT_OK


def cmd_reference(args) -> int:
    text = config.reference_markdown()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phasevoid", description="Phase change with voids: simulator and checks.")
    p.add_argument("--version", action="version", version=f"phasevoid {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log dt halvings and progress")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, metavar="PATH", help="YAML run configuration")
        sp.add_argument("--seed", type=int, default=None, help="reserved; the simulator is deterministic")

    r = sub.add_parser("run", help="run a configuration or scenario preset")
    common(r)
    r.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
    r.add_argument("--snapshot-every", type=int, default=None, metavar="N", help="snapshot cadence in steps")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="convergence study along sigma, dt or mesh")
    common(s)
    s.add_argument("--axis", required=True, choices=studies.AXES)
    s.add_argument("--values", required=True, help="comma-separated values; the last one is the reference")
    s.add_argument("--out", metavar="DIR")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="parse, validate and echo the canonical configuration")
    common(v)
    v.set_defaults(func=cmd_validate)

    sc = sub.add_parser("scenarios", help="list scenario presets")
    sc.add_argument("--run", metavar="NAME", help="run one preset with its defaults and print the report")
    sc.set_defaults(func=cmd_scenarios)

    cr = sub.add_parser("config-reference", help="print the configuration reference (markdown)")
    cr.add_argument("--out", metavar="FILE")
    cr.set_defaults(func=cmd_reference)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except config.ConfigError as exc:
        return _error("config", str(exc), EXIT_CONFIG)
    except (StepError, ops.SolverError) as exc:
        return _error("step", str(exc), EXIT_STEP)


if __name__ == "__main__":
    sys.exit(main())
