"""Descent outcomes on random lifted-space tensors, with and without restarts.

Random symmetric tensors often have nonzero local minima of the projected
norm; this counts how often plain descent stops at one and how often the
restart logic recovers.

    python scripts/convergence_survey.py --trials 200
"""
import argparse
from collections import Counter

import numpy as np

from skewfree.moments import SymTensor3
from skewfree.rotation import DescentConfig, minimize_projected_norm


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--trials", type=int, default=200)
    parser.add_argument("--dims", type=int, nargs="+", default=[1, 2, 3])
    args = parser.parse_args()

    print("N,restarts,status,count,median_iters")
    for n in args.dims:
        dim = n + n * (n + 1) // 2
        for restarts in (0, 3):
            counts, iters = Counter(), []
            for seed in range(args.trials):
                rng = np.random.default_rng(seed)
                tensor = SymTensor3.from_dense(rng.normal(size=(dim,) * 3), symmetrize=True)
                _, outcome = minimize_projected_norm(tensor, n, DescentConfig(restarts=restarts))
                counts[outcome.status.value] += 1
                iters.append(outcome.iters)
            for status, count in sorted(counts.items()):
                print(f"{n},{restarts},{status},{count},{int(np.median(iters))}")


if __name__ == "__main__":
    main()
