"""Loss fluctuation of the bridge path as its noise scale sigma grows.

Reports the variance of the last 500 training losses per seed and sigma,
how many seeds order them monotonically, and the per-sigma medians.
"""

import argparse

import numpy as np

from bridgeflow import experiments


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sigmas", type=float, nargs="+", default=[0.0, 0.01, 0.1])
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--iterations", type=int, default=2000)
    args = parser.parse_args()

    task = experiments.oscillator_task(0)
    table = experiments.sigma_sensitivity(task, args.sigmas, range(args.seeds), args.iterations)
    print("seed  " + "".join(f"{f'sigma={s:g}':>14}" for s in args.sigmas))
    for seed, row in enumerate(table):
        print(f"{seed:<6}" + "".join(f"{v:>14.4g}" for v in row))
    print("median" + "".join(f"{v:>14.4g}" for v in np.median(table, axis=0)))
    monotone = int(np.sum(np.all(np.diff(table, axis=1) >= 0, axis=1)))
    print(f"seeds with non-decreasing variance in sigma: {monotone}/{args.seeds}")


if __name__ == "__main__":
    main()
