"""Compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints the best-of-N wall time for each kernel under both backends, the
speed-up, and the largest relative disagreement between the two outputs.
"""
import argparse
import timeit

import numpy as np

from toda_she import _kernels_py as fallback

try:
    from toda_she import _kernels as compiled
except ImportError:  # extension not built
    compiled = None


def cases(rng):
    batch, k = 20_000, 3
    vals = rng.standard_normal((batch, k, k))
    xn = np.sort(rng.uniform(-1, 1, (batch, k)), axis=1) + np.arange(k) * 0.05
    yn = np.sort(rng.uniform(-1, 1, (batch, k)), axis=1) + np.arange(k) * 0.05
    mats = rng.standard_normal((50_000, 4, 4))
    F, G = rng.standard_normal((2, 3, 96))
    return {
        "newton_rows (20000 x 3x3)": lambda m: m.newton_rows(vals, xn),
        "dd_det (20000 x 3x3)": lambda m: m.dd_det(vals, xn, yn),
        "det_lu (50000 x 4x4)": lambda m: m.det_lu(mats),
        "ordered_minor_sum (k=3, 96 cols)": lambda m: m.ordered_minor_sum(F, G),
    }


def gap(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if compiled is None:
        print("compiled extension not available; build it with `pip install -e . --no-build-isolation`")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'cython [s]':>11s} {'python [s]':>11s} {'speed-up':>9s} {'rel gap':>9s}")
    for name, call in cases(rng).items():
        t_c = min(timeit.repeat(lambda: call(compiled), number=1, repeat=args.repeat))
        t_p = min(timeit.repeat(lambda: call(fallback), number=1, repeat=args.repeat))
        print(f"{name:36s} {t_c:11.4f} {t_p:11.4f} {t_p / t_c:9.1f} {gap(call(compiled), call(fallback)):9.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
