"""Compare the compiled and NumPy implementations of the inversion integral.

    python3 benchmarks/bench_kernels.py [--cases N] [--repeat R] [--seed S]

Both backends get the same random (lambda, r) instances; the script reports
the median time per integral and the largest disagreement between them.
"""
import argparse
import statistics
import sys
import time

import numpy as np

from probcon import _kernels_py
from probcon.dirichlet import GroupedCoefficients, truncation_point

try:
    from probcon import _kernels
except ImportError:
    _kernels = None


def instances(n_cases, seed):
    gen = np.random.default_rng(seed)
    out = []
    for _ in range(n_cases):
        k = int(gen.integers(2, 7))
        lam = gen.uniform(-1.0, 1.0, k)
        lam /= np.abs(lam).max()
        r = 2.0 * gen.uniform(0.5, 10.0, k)
        T = truncation_point(GroupedCoefficients(lam, r), 1e-9)
        out.append((lam, r, T))
    return out


def timed(impl, cases, repeat, tol):
    per_call = []
    values = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        vals = [impl.chi2comb_integral(lam, r, T, tol, 4000)[0] for lam, r, T in cases]
        per_call.append((time.perf_counter() - t0) / len(cases))
        values = vals
    return statistics.median(per_call), np.array(values)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cases", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    cases = instances(args.cases, args.seed)
    tol = 0.9e-9 * np.pi
    t_py, v_py = timed(_kernels_py, cases, args.repeat, tol)
    print(f"python  {t_py * 1e6:10.1f} us/integral")
    if _kernels is None:
        print("cython  extension not built; run `pip install --no-build-isolation -e .`")
        return 0
    t_cy, v_cy = timed(_kernels, cases, args.repeat, tol)
    print(f"cython  {t_cy * 1e6:10.1f} us/integral")
    print(f"speedup {t_py / t_cy:10.1f}x")
    print(f"max |difference| {np.abs(v_py - v_cy).max():.3e} over {len(cases)} instances")
    return 0


if __name__ == "__main__":
    sys.exit(main())
