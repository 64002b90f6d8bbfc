#!/usr/bin/env python3
"""Run the weak/supervised/hybrid comparison and print JSON results.

Defaults match the regression configuration: 5 seeds, 15% vocabulary
mismatch, 10k weak + 1013 manual reports per seed.  Expect roughly a minute
per seed on one core.
"""

import argparse
import json
import sys
import time

from reportlabeler.experiments import run_regime_benchmark
from reportlabeler.training import Regime


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=5, help="number of seeds")
    parser.add_argument("--mismatch", type=float, default=0.15)
    parser.add_argument("--weak-pool", type=int, default=11_000)
    parser.add_argument("--manual-pool", type=int, default=1_013)
    parser.add_argument("--test-pool", type=int, default=1_000)
    parser.add_argument(
        "--fractions",
        default="25,100",
        help="supervised fractions to run besides weak/hybrid",
    )
    parser.add_argument("--out", help="optional JSON output path")
    args = parser.parse_args()

    regimes = [Regime.weakly_supervised()]
    for raw in args.fractions.split(","):
        regimes.append(Regime.supervised(int(raw)))
    regimes.append(Regime.hybrid(100))

    start = time.time()
    result = run_regime_benchmark(
        seeds=range(args.seeds),
        regimes=regimes,
        mismatch_rate=args.mismatch,
        weak_pool=args.weak_pool,
        manual_pool=args.manual_pool,
        test_pool=args.test_pool,
    )
    payload = result.to_json_dict()
    payload["runtime_seconds"] = round(time.time() - start, 1)
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
