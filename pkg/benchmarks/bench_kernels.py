"""Compare the compiled and pure-Python kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from codesign import _backend, _kernels_py
from codesign.designs import DesignRequest, design
from codesign.model import NoiseSpec
from codesign.sim import generate_covariates

try:
    from codesign import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

KERNELS = ("jacobi_eigh", "cholesky", "best_flip_ascent")


def cases(n, rng):
    a = rng.standard_normal((n, n))
    spd = a @ a.T + n * np.eye(n)
    c = np.ascontiguousarray(a @ a.T)
    x0 = np.where(rng.standard_normal(n) >= 0, 1.0, -1.0)
    return {
        f"jacobi_eigh n={n}": lambda k: k.jacobi_eigh(spd, 1e-15, 100),
        f"cholesky n={n}": lambda k: k.cholesky(spd),
        f"best_flip_ascent n={n}": lambda k: k.best_flip_ascent(c, x0.copy(), 10 * n, 1e-12),
    }


def time_call(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", default="32,96")
    args = ap.parse_args()
    if _kernels_c is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'python (ms)':>14}{'cython (ms)':>14}{'speedup':>10}")
    for n in (int(s) for s in args.sizes.split(",")):
        for name, fn in cases(n, rng).items():
            tp = time_call(lambda: fn(_kernels_py), args.repeat)
            tc = time_call(lambda: fn(_kernels_c), args.repeat)
            print(f"{name:<28}{tp * 1e3:>14.3f}{tc * 1e3:>14.3f}{tp / tc:>10.1f}")

    # end to end: greedy local search on a study-sized instance, swapping every kernel
    cov = generate_covariates(96, 70, 1)
    req = DesignRequest(cov, NoiseSpec.from_sd(0.25, 1.0, 4), "greedy_ls")
    timings = {}
    for label, mod in (("python", _kernels_py), ("cython", _kernels_c)):
        saved = {name: getattr(_backend, name) for name in KERNELS}
        for name in KERNELS:
            setattr(_backend, name, getattr(mod, name))
        try:
            timings[label] = time_call(lambda: design(req), args.repeat)
        finally:
            for name, fn in saved.items():
                setattr(_backend, name, fn)
    print(f"{'greedy_ls N=96 K=4 p=70':<28}{timings['python'] * 1e3:>14.3f}"
          f"{timings['cython'] * 1e3:>14.3f}{timings['python'] / timings['cython']:>10.1f}")


if __name__ == "__main__":
    main()
