"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_backends.py [--n 64 128 256] [--repeat 5]

Times the stencil apply, a conjugate-residual solve and the triangle
projection on square grids, and a short coupled run, for every available
backend. Prints a CSV table with the speedup of each backend over numpy.
"""
import argparse
import statistics
import time

import numpy as np

from phasevoid import _backend
from phasevoid import operators as ops
from phasevoid.integrator import StepConfig, run
from phasevoid.model import BoundaryConfig, Grid, MaterialParams, SourceConfig, State


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n):
    grid = Grid((n, n), (1.0, 1.0))
    rng = np.random.default_rng(0)
    u = rng.standard_normal(grid.shape)
    spec = ops.OperatorSpec(1.0, grid)
    a = ops.assemble(spec)
    b1, b2 = rng.uniform(-0.5, 1.5, (2, n * n))
    o1, o2 = np.empty_like(b1), np.empty_like(b2)
    init = State.from_functions(grid, p=lambda x, y, t: 0.1 * np.cos(np.pi * x), theta=1.0, beta1=0.6, beta2=0.3)
    cfg = StepConfig(dt=1e-3)
    params = MaterialParams(k=0.1)
    return {
        "apply": lambda: ops.apply(spec, u, assembled=a),
        "cr_solve": lambda: ops.solve_implicit(spec, 100.0, u, tol=1e-10, assembled=a),
        "project": lambda: _backend.kernels.project_triangle(b1, b2, o1, o2),
        "run_10_steps": lambda: run(init, cfg, params, grid, BoundaryConfig(), SourceConfig(), 10 * cfg.dt,
                                    record=False),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = _backend.available()
    start = _backend.current()
    print("n,case," + ",".join(f"{b}_s" for b in backends) + ",speedup")
    speedups = []
    try:
        for n in args.n:
            timings = {}
            for b in backends:
                _backend.set_backend(b)
                for name, fn in cases(n).items():
                    fn()  # warm-up
                    timings.setdefault(name, {})[b] = _best(fn, args.repeat)
            for name, t in timings.items():
                sp = t["python"] / t["cython"] if "cython" in t else float("nan")
                speedups.append(sp)
                print(f"{n},{name}," + ",".join(f"{t[b]:.3e}" for b in backends) + f",{sp:.2f}")
    finally:
        _backend.set_backend(start)
    if "cython" in backends:
        print(f"# median speedup of cython over python: {statistics.median(speedups):.2f}x")
    else:
        print("# compiled backend not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
