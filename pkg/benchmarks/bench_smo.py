"""Benchmark the compiled SMO inner loop against the pure-Python fallback.

Runs the same box-constrained dual problems through both backends and
reports wall time, update counts, and the objective agreement.  Usage:

    python3 benchmarks/bench_smo.py [--sizes 120,240,480] [--reps 3]
"""

import argparse
import time

import numpy as np

from groupmtl.smo import backend, smo_solve


def make_problem(rng, m_per_task, T=2, dim=12):
    X = rng.standard_normal((T * m_per_task, dim))
    w = rng.standard_normal(dim)
    y = np.where(X @ w + 0.3 * rng.standard_normal(T * m_per_task) >= 0, 1.0, -1.0)
    for t in range(T):
        block = y[t * m_per_task:(t + 1) * m_per_task]
        if np.unique(block).size < 2:
            block[0] = -block[0]
    K = X @ X.T
    K += 1e-8 * np.eye(K.shape[0])
    slices = [(t * m_per_task, (t + 1) * m_per_task) for t in range(T)]
    return K, y, slices


def run_backend(K, y, slices, force_pure, reps):
    times, result = [], None
    for _ in range(reps):
        t0 = time.perf_counter()
        result = smo_solve(K, y, slices, C=1.0, tol=1e-5,
                           force_pure=force_pure)
        times.append(time.perf_counter() - t0)
    return min(times), result


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="120,240,480",
                    help="comma-separated total problem sizes (rows of K)")
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"default backend: {backend()}")
    header = (f"{'M':>6} {'compiled_s':>11} {'python_s':>10} "
              f"{'speedup':>8} {'updates':>9} {'obj_rel_diff':>13}")
    print(header)
    rng = np.random.default_rng(args.seed)
    for size in (int(s) for s in args.sizes.split(",")):
        K, y, slices = make_problem(rng, size // 2)
        tc, rc = run_backend(K, y, slices, force_pure=False, reps=args.reps)
        tp, rp = run_backend(K, y, slices, force_pure=True, reps=args.reps)
        rel = abs(rc.objective - rp.objective) / max(abs(rc.objective), 1e-12)
        print(f"{K.shape[0]:>6} {tc:>11.4f} {tp:>10.4f} "
              f"{tp / max(tc, 1e-12):>8.1f}x {rc.updates:>9} {rel:>13.2e}")


if __name__ == "__main__":
    main()
