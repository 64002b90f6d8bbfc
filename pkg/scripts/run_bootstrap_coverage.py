#!/usr/bin/env python3
"""Empirical coverage of the percentile bootstrap CI on Bernoulli means."""

import argparse
import json
import sys
import time

from reportlabeler.experiments import bootstrap_coverage


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--p", type=float, default=0.8)
    parser.add_argument("--n", type=int, default=200)
    parser.add_argument("--trials", type=int, default=1000)
    parser.add_argument("--resamples", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    start = time.time()
    coverage = bootstrap_coverage(
        p=args.p,
        n=args.n,
        trials=args.trials,
        n_resamples=args.resamples,
        seed=args.seed,
    )
    print(
        json.dumps(
            {
                "p": args.p,
                "n": args.n,
                "trials": args.trials,
                "resamples": args.resamples,
                "coverage": coverage,
                "runtime_seconds": round(time.time() - start, 1),
            },
            sort_keys=True,
        )
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
