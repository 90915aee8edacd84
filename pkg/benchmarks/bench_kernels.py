"""Time the compiled kernels against the pure-numpy fallback.

Each backend runs in its own interpreter because the backend is chosen when
``odemap`` is imported.  Usage::

    python3 benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = """
import json, time
import numpy as np
from odemap import ExperimentConfig, SolverConfig, build_iwp, logistic, run_experiment, solve
from odemap._jit import USE_NUMBA

problem = logistic().problem
cases = {"solve IEKS nu=2 h=2^-8": lambda: solve(problem, SolverConfig.uniform("IEKS", build_iwp(2), 1.0, 2.0**-8)),
         "solve EKS1 nu=4 h=2^-10": lambda: solve(problem, SolverConfig.uniform("EKS1", build_iwp(4), 1.0, 2.0**-10)),
         "sweep logistic nu=1,2 e=10": lambda: run_experiment(ExperimentConfig(
             "logistic", nu_list=(1, 2), dense_exponent=10, decimation_exponents=tuple(range(3, 9))))}
out = {"numba": USE_NUMBA}
for name, fn in cases.items():
    fn()  # warm-up, includes compilation or cache load
    best = float("inf")
    for _ in range({repeats}):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    out[name] = best
print(json.dumps(out))
"""


def run(disable, repeats):
    env = dict(os.environ, ODEMAP_DISABLE_NUMBA="1" if disable else "0")
    code = WORKLOAD.replace("{repeats}", str(repeats))
    proc = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3, help="timed repetitions per case (best is kept)")
    args = parser.parse_args(argv)
    fast, plain = run(False, args.repeats), run(True, args.repeats)
    if not fast.pop("numba"):
        print("warning: numba unavailable, both columns use the numpy path")
    plain.pop("numba")
    print(f"{'case':<30} {'numba [s]':>10} {'numpy [s]':>10} {'speed-up':>9}")
    for name, t_fast in fast.items():
        t_plain = plain[name]
        print(f"{name:<30} {t_fast:>10.4f} {t_plain:>10.4f} {t_plain / t_fast:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
