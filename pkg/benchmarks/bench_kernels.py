"""Compare the numba and pure-numpy RK4 kernels on the same step grid.

    python benchmarks/bench_kernels.py [--N 3 6 10] [--steps 2000] [--repeat 3]

The numba timing excludes the first (compiling) call. Both backends must agree
to rounding; the script reports the largest velocity discrepancy as well.
"""

import argparse
import time

import numpy as np

from csflock.kernels import WEIGHT_ALGEBRAIC, numba_backend, numpy_backend


def make_problem(N, d, steps, seed):
    rng = np.random.default_rng(seed)
    X0 = rng.uniform(-1, 1, (N, d))
    V0 = rng.uniform(-1, 1, (N, d))
    adj = (rng.random((2, N, N)) < 0.5).astype(float)
    for k in range(2):
        np.fill_diagonal(adj[k], 1.0)
    label = rng.integers(0, 2, steps).astype(np.int64)
    h = np.full(steps, 1e-3)
    record = np.zeros(steps, dtype=np.bool_)
    record[::10] = True
    mark = np.zeros(steps, dtype=np.bool_)
    mark[steps // 2] = mark[-1] = True
    return X0, V0, adj, label, h, record, mark


def best_time(fn, args, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=int, nargs="+", default=[3, 6, 10])
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--phi", action="store_true", help="also propagate the transition matrix")
    args = ap.parse_args()

    if numba_backend is None:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"{'N':>4} {'steps':>7} {'numpy [s]':>11} {'numba [s]':>11} {'speedup':>8} {'max |dV|':>10}")
    for N in args.N:
        prob = make_problem(N, args.d, args.steps, seed=N)
        call = prob + (WEIGHT_ALGEBRAIC, 1.0, 0.5, args.phi)
        numba_backend.run_rk4(*call)  # compile
        t_np, out_np = best_time(numpy_backend.run_rk4, call, args.repeat)
        t_nb, out_nb = best_time(numba_backend.run_rk4, call, args.repeat)
        err = np.abs(out_np[1] - out_nb[1]).max()
        print(f"{N:>4} {args.steps:>7} {t_np:>11.4f} {t_nb:>11.4f} {t_np / t_nb:>8.1f} {err:>10.2e}")


if __name__ == "__main__":
    main()
