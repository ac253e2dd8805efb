"""Time the compiled kernels against the numpy fallback.

Each backend runs in its own interpreter because the choice is fixed at
import time by ``MGFNO_NUMBA``. Usage::

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

CASES = {
    "rfft (250, 1024)": (
        "x = rng.standard_normal((250, 1024))",
        "fft.rfft(x, axis=-1)",
    ),
    "fft len 1000 (Bluestein)": (
        "x = rng.standard_normal((64, 1000)) + 1j * rng.standard_normal((64, 1000))",
        "fft.fft(x, axis=-1)",
    ),
    "irfft (250, 1024)": (
        "X = fft.rfft(rng.standard_normal((250, 1024)), axis=-1)",
        "fft.irfft(X, 1024, axis=-1)",
    ),
    "gelu (20, 1024, 64)": (
        "x = Tensor(rng.standard_normal((20, 1024, 64)))",
        "ops.gelu(x)",
    ),
    "phi (20, 1024, 64)": (
        "x = rng.standard_normal((20, 1024, 64)) * 2",
        "ops.phi_values(x)",
    ),
    "jacobi sweep 421^2": (
        "s = mg.StencilSystem(np.ones((421, 421)), coeff=np.exp(rng.standard_normal((421, 421)))); u = np.zeros((421, 421))",
        "mg.jacobi_sweep(s, u, 0.8)",
    ),
    "mg_solve 1-d 4097": (
        "s = mg.StencilSystem(rng.standard_normal(4097))",
        "mg.mg_solve(s, tol=1e-10)",
    ),
}

SETUP = """
import numpy as np
from mgfno_lab import mg
from mgfno_lab.tensor import Tensor, fft, ops
rng = np.random.default_rng(0)
"""


def run_backend(repeat):
    results = {}
    for name, (setup, stmt) in CASES.items():
        timer = timeit.Timer(stmt, SETUP + setup)
        timer.timeit(1)  # compile and warm caches
        number, _ = timer.autorange()
        best = min(timer.repeat(repeat, number)) / number
        results[name] = best
    return results


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()
    if args.child:
        print(json.dumps(run_backend(args.repeat)))
        return
    timings = {}
    for backend, flag in (("numba", "1"), ("numpy", "0")):
        env = dict(os.environ, MGFNO_NUMBA=flag)
        out = subprocess.run(
            [sys.executable, __file__, "--child", "--repeat", str(args.repeat)],
            env=env, check=True, capture_output=True, text=True,
        )
        timings[backend] = json.loads(out.stdout.strip().splitlines()[-1])
    width = max(map(len, CASES))
    print(f"{'kernel':<{width}}  {'numba ms':>10}  {'numpy ms':>10}  {'speedup':>8}")
    for name in CASES:
        a, b = timings["numba"][name] * 1e3, timings["numpy"][name] * 1e3
        print(f"{name:<{width}}  {a:>10.3f}  {b:>10.3f}  {b / a:>7.2f}x")


if __name__ == "__main__":
    main()
