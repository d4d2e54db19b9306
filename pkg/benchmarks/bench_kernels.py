"""Timing of the compiled kernels against their pure-numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Each backend runs in a fresh interpreter so GAMMA_CAL_DISABLE_NUMBA is read
at import time exactly as in normal use.  The first (compiling) call is
excluded from the numba timings.
"""

import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
import numpy as np
from gammacal import _kernels
from gammacal._accel import backend_name

repeat = int(sys.argv[1])
g = np.random.default_rng(0)
n = 1000
Z = np.column_stack([np.ones(n), g.uniform(-1, 1, (n, 5))])
y = Z @ g.normal(size=6) + g.normal(size=n)
taus = np.sort(np.r_[1 / (1 + np.arange(1, 21)), 1 - 1 / (1 + np.arange(1, 21))])
X = g.uniform(-1, 1, (n, 5))
t = (g.random(n) < 1 / (1 + np.exp(-X.sum(axis=1)))).astype(float)
seeds = np.arange(1, 51, dtype=np.uint64)

def qr():
    _kernels.quantile_path(Z, y, taus)

def forest():
    f = _kernels.grow_forest(X, t, seeds, n // 2, 3, 5, True)
    _kernels.predict_forest(X, *f[:5])

out = {"backend": backend_name()}
for name, fn in (("quantile_path_40_taus", qr), ("forest_50_trees", forest)):
    fn()  # warm-up / compile
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    out[name] = best
print(json.dumps(out))
"""


def run(disable, repeat):
    env = dict(os.environ)
    if disable:
        env["GAMMA_CAL_DISABLE_NUMBA"] = "1"
    else:
        env.pop("GAMMA_CAL_DISABLE_NUMBA", None)
    res = subprocess.run([sys.executable, "-c", CHILD, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    nb = run(False, args.repeat)
    py = run(True, args.repeat)
    print(f"{'kernel':<24}{'numba (s)':>12}{'numpy (s)':>12}{'speedup':>10}")
    for key in ("quantile_path_40_taus", "forest_50_trees"):
        print(f"{key:<24}{nb[key]:>12.4f}{py[key]:>12.4f}{py[key] / nb[key]:>9.1f}x")
    if nb["backend"] != "numba":
        print("note: numba unavailable, both columns used the numpy kernels")


if __name__ == "__main__":
    main()
