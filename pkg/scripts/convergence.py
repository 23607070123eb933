"""Bridge path against the ot path on the oscillator corpus.

For each seed both paths train with identical hyperparameters; the table
lists iterations to reach half the zero-model loss and the final-step
forecast RFNE. ``--csv`` also writes both loss curves for plotting.
"""

import argparse
import csv

import numpy as np

from bridgeflow import experiments


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--iterations", type=int, default=2000)
    parser.add_argument("--csv", help="write per-iteration losses of every run here")
    args = parser.parse_args()

    task = experiments.oscillator_task(0)
    runs = {p: [experiments.train_and_forecast(task, p, s, iterations=args.iterations) for s in range(args.seeds)]
            for p in ("bridge", "ot")}

    print(f"{'path':<8}{'seed':>6}{'baseline':>12}{'iters to 50%':>14}{'final RFNE':>12}")
    for path, rs in runs.items():
        for r in rs:
            hit = "never" if r.iters_to_half is None else str(r.iters_to_half)
            print(f"{path:<8}{r.seed:>6}{r.baseline:>12.4g}{hit:>14}{r.rfne:>12.4g}")
    for path, rs in runs.items():
        med = experiments.median_iterations([r.iters_to_half for r in rs])
        print(f"{path}: median iterations {med:g}, median RFNE {np.median([r.rfne for r in rs]):.4g}")

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["path", "seed", "iteration", "loss", "relative_loss"])
            for path, rs in runs.items():
                for r in rs:
                    for i, loss in enumerate(r.losses):
                        writer.writerow([path, r.seed, i, repr(float(loss)), repr(float(loss / r.baseline))])


if __name__ == "__main__":
    main()
