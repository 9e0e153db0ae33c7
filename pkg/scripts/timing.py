"""Fit time versus sample size for 5-D skewed data, single-threaded BLAS.

    python scripts/timing.py --sizes 10000 100000 1000000
"""
import argparse
import time

import numpy as np
from threadpoolctl import threadpool_limits

from skewfree import fit
from skewfree.lifting import fit_lift, lift_data
from skewfree.moments import compute_third_moment
from skewfree.whitening import apply_affine, fit_whitening


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--dim", type=int, default=5)
    parser.add_argument("--sizes", type=int, nargs="+", default=[10_000, 100_000, 1_000_000])
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    mix = rng.normal(size=(args.dim, args.dim))
    print("points,total_s,third_moment_s,iterations,status")
    for size in args.sizes:
        points = rng.gamma(2.0, size=(size, args.dim)) @ mix
        with threadpool_limits(1):
            start = time.perf_counter()
            model = fit(points)
            total = time.perf_counter() - start
            white = apply_affine(fit_whitening(points)[0], points)
            lifted = lift_data(white, fit_lift(white))
            start = time.perf_counter()
            compute_third_moment(lifted)
            moment = time.perf_counter() - start
        print(f"{size},{total:.3f},{moment:.3f},{model.outcome.iters},"
              f"{model.outcome.status.value}")


if __name__ == "__main__":
    main()
