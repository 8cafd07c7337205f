"""Finite-population gap to the mean-field limit as N grows.

Prints the mean and spread over seeds of sup_t |Y^N_t - y_t| and the fitted
log-log slope, which should be close to -1/2.

Usage: python scripts/meanfield_limit.py [--seeds 10] [--t-end 10]
"""
import argparse
import time

import numpy as np

from entropic_mf.markov import validate_generator
from entropic_mf.population import meanfield_gap, meanfield_on_grid, simulate_population
from entropic_mf.signals import sinusoid


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10, help="replicates per N")
    ap.add_argument("--t-end", type=float, default=10.0, help="horizon")
    ap.add_argument("--output-dt", type=float, default=0.05, help="output grid spacing")
    ap.add_argument("--amplitude", type=float, default=0.2, help="control amplitude")
    args = ap.parse_args()

    D = validate_generator([[-1.0, 1.0], [1.0, -1.0]])
    util = np.array([0.0, 1.0])
    mu0 = [0.5, 0.5]
    sig = sinusoid(args.amplitude, 1.0)
    mf = meanfield_on_grid(D, util, sig, mu0, args.t_end, args.output_dt)

    ns = [100, 1000, 10_000, 100_000]
    means = []
    for n in ns:
        start = time.perf_counter()
        gaps = [meanfield_gap(simulate_population(D, util, sig, n, mu0, args.t_end, args.output_dt, s), mf)[1]
                for s in range(args.seeds)]
        means.append(np.mean(gaps))
        print(f"N={n:>7}  mean gap {np.mean(gaps):.4e}  sd {np.std(gaps):.2e}  sqrt(N)*gap {np.sqrt(n) * np.mean(gaps):.3f}"
              f"  ({time.perf_counter() - start:.1f}s)")
    slope = np.polyfit(np.log(ns), np.log(means), 1)[0]
    print(f"log-log slope {slope:.3f}")


if __name__ == "__main__":
    main()
