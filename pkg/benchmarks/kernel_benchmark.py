"""Benchmark the hot kernels with and without numba compilation.

Usage:
    python benchmarks/kernel_benchmark.py            # both paths, one table
    python benchmarks/kernel_benchmark.py --single   # current process only

The default mode re-invokes this script in two subprocesses, one with
DMIS_DISABLE_NUMBA=1, and prints the timings side by side.  Compilation
time is excluded by a warmup pass before each measurement.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

REPEATS = 3


def _best(fn):
    fn()  # warmup (numba compilation, caches)
    best = np.inf
    for _ in range(REPEATS):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def workloads():
    from dmis import autodiff, mesh, mlp, problems, refsolve, training

    rng = np.random.default_rng(0)
    pts = [(i, p[0], p[1]) for i, p in enumerate(rng.random((300, 2)))]
    tri = mesh.build(pts)
    tri.set_values(rng.random(len(tri.ids)))
    queries = rng.random((5000, 2))

    net = mlp.init(3, 32, 1, seed=0)
    jet_t = rng.uniform(0, 0.5, 5000)
    jet_x = rng.uniform(-1, 1, 5000)

    diffusion = problems.make_problem("diffusion")

    def bench_train():
        cfg = training.default_config(
            "burgers", sampler="dmis", max_iters=50, n_f=2000, n_i=200,
            n_b=200, s_size=150, batch_f=128, batch_i=32, batch_b=32,
        )
        training.train(cfg)

    return {
        "delaunay build (300 pts)": lambda: mesh.build(pts),
        "locate+interpolate (5k queries)": lambda: tri.plan_queries(queries),
        "jet evaluation (5k pts, order 3)": lambda: autodiff.jet_values(
            net, jet_t, jet_x, max_x_order=3
        ),
        "finite-difference solve (nx=64)": lambda: refsolve.solve(
            diffusion, nx=64, nt=11
        ),
        "dmis training (50 iters)": bench_train,
    }


def run_single():
    results = {name: _best(fn) for name, fn in workloads().items()}
    print(json.dumps(results))


def run_both():
    script = os.path.abspath(__file__)
    rows = {}
    for label, extra_env in (("numba", {}), ("numpy", {"DMIS_DISABLE_NUMBA": "1"})):
        env = dict(os.environ, **extra_env)
        out = subprocess.run(
            [sys.executable, script, "--single"],
            env=env, capture_output=True, text=True, check=True,
        )
        rows[label] = json.loads(out.stdout.splitlines()[-1])

    width = max(len(k) for k in rows["numba"]) + 2
    print(f"{'workload':<{width}} {'numba':>10} {'numpy':>10} {'speedup':>8}")
    for name in rows["numba"]:
        a, b = rows["numba"][name], rows["numpy"][name]
        print(f"{name:<{width}} {a * 1e3:>8.1f}ms {b * 1e3:>8.1f}ms {b / a:>7.1f}x")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--single", action="store_true",
                        help="time the current process only, emit JSON")
    args = parser.parse_args()
    if args.single:
        run_single()
    else:
        run_both()
