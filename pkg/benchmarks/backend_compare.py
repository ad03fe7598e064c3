#!/usr/bin/env python3
"""Time the numba kernels against the pure-numpy fallback.

Runs the four scalar estimators and one CGD cycle under both backends and
prints a side-by-side table. Each backend lives in its own subprocess so
ROBUSTCGD_BACKEND is honored at import time.

Usage: python benchmarks/backend_compare.py [--n 200000] [--reps 20]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np

n = int(sys.argv[1])
reps = int(sys.argv[2])

from robustcgd import backend
from robustcgd import robust_scalar as rs
from robustcgd.rng import new_state
from robustcgd.losses import Loss
from robustcgd.solvers import SolverConfig, GivenLipschitz, cgd_fit
from robustcgd.robust_scalar import EstimatorSpec

_k = rs._k
state = new_state(0)
gen = np.random.default_rng(1)
z = gen.standard_normal(n)
v = gen.chisquare(2.1, n)
values = z / np.sqrt(v / 2.1)
k_blocks = min(83, n)
trim = rs.tm_eps_from_confidence(0.01, 0.0, n)

def bench(fn):
    for _ in range(3):
        fn()
    t0 = time.perf_counter_ns()
    for _ in range(reps):
        fn()
    return (time.perf_counter_ns() - t0) / reps / 1e6  # ms

out = {"backend": backend.get_backend()}
out["erm"] = bench(lambda: _k.erm_mean(values))
out["mom"] = bench(lambda: _k.mom_alloc(values, k_blocks, state))
out["tm"] = bench(lambda: _k.tm_alloc(values, trim))
out["ch"] = bench(lambda: _k.catoni_holland(values, 0.01, 50, 1e-8))

d = 10
X = gen.standard_normal((n // 10, d))
theta = gen.standard_normal(d)
y = X @ theta + gen.standard_normal(n // 10)
L = (X * X).mean(axis=0)
cfg = SolverConfig(estimator=EstimatorSpec.mom(n_blocks=k_blocks), max_cycles=1,
                   step_sizes=GivenLipschitz(L), seed=0, record_objective=False)
out["cgd_cycle_mom"] = bench(lambda: cgd_fit(X, y, Loss.square(), cfg))
print(json.dumps(out))
"""


def run_backend(name, n, reps):
    env = dict(os.environ, ROBUSTCGD_BACKEND=name)
    proc = subprocess.run(
        [sys.executable, "-c", WORKER, str(n), str(reps)],
        capture_output=True,
        text=True,
        env=env,
        check=True,
    )
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--reps", type=int, default=20)
    args = ap.parse_args()

    results = {name: run_backend(name, args.n, args.reps) for name in ("numba", "numpy")}
    kernels = ["erm", "mom", "tm", "ch", "cgd_cycle_mom"]
    print(f"n = {args.n}, reps = {args.reps}, times in ms per call")
    print(f"{'kernel':<16}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for kern in kernels:
        a = results["numba"][kern]
        b = results["numpy"][kern]
        print(f"{kern:<16}{a:>12.3f}{b:>12.3f}{b / a:>10.2f}x")


if __name__ == "__main__":
    main()
