"""Time the numba kernels against their numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--n 100000] [--reps 200] [--repeat 5]
"""

import argparse
import time

import numpy as np

from bregsq import _kernels as K
from bregsq.distributions import exponential, sample
from bregsq.estimators import tail_start


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not K.HAVE_NUMBA:
        raise SystemExit("numba is not available (or BREGSQ_DISABLE_NUMBA is set)")

    n, alpha = args.n, 0.95
    z = np.sort(sample(exponential(), n, 1))
    k0 = tail_start(n, alpha) + 1
    h = max(5, int(np.ceil(np.sqrt(n))))
    tail = z[max(k0 - h, 1) - 1:]
    x = np.stack([sample(exponential(), n, s) for s in range(args.reps)])

    # warm the JIT before timing
    K.plugin_sigma2_numba(tail, k0, n, alpha, h)
    K._batch_tail_sums_jit(x[:2], k0)

    rows = [
        ("plugin_sigma2", lambda: K.plugin_sigma2_numpy(tail, k0, n, alpha, h),
         lambda: K.plugin_sigma2_numba(tail, k0, n, alpha, h)),
        (f"batch_tail_sums ({args.reps}x{n})", lambda: K._batch_tail_sums_numpy(x, k0),
         lambda: K._batch_tail_sums_jit(x, k0)),
    ]
    print(f"{'kernel':32s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speed-up':>9s}")
    for name, f_np, f_nb in rows:
        a, b = best_of(f_np, args.repeat), best_of(f_nb, args.repeat)
        print(f"{name:32s} {1e3 * a:12.3f} {1e3 * b:12.3f} {a / b:9.2f}")


if __name__ == "__main__":
    main()
