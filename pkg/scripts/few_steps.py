"""Forecast error against the number of rk4 integration steps.

Trains one bridge-path model per seed and reports the horizon-mean RFNE
for several step counts, averaged over ten sampler seeds.
"""

import argparse

from bridgeflow import experiments


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, nargs="+", default=[1, 2, 5, 10, 20, 50])
    parser.add_argument("--seeds", type=int, default=3)
    args = parser.parse_args()

    task = experiments.oscillator_task(0)
    print("seed  " + "".join(f"{f'N={n}':>10}" for n in args.steps))
    for seed in range(args.seeds):
        run = experiments.train_and_forecast(task, "bridge", seed)
        vals = experiments.few_step_rfne(run, task, steps=args.steps)
        print(f"{seed:<6}" + "".join(f"{vals[n]:>10.4g}" for n in args.steps))


if __name__ == "__main__":
    main()
