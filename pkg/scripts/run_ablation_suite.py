#!/usr/bin/env python3
"""Run the four-variant ablation over several seeds and print the table.

Usage: python scripts/run_ablation_suite.py [--seeds 0 1 2] [--epochs 30]
       [--bench-sessions 200] [--out runs/ablation]
"""

import argparse
import json
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from pipedial.benchmark import compare
from pipedial.experiments import ABLATION_ORDER, run_ablation_suite
from pipedial.snapshot import World


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--bench-sessions", type=int, default=200)
    parser.add_argument("--out", default="runs/ablation")
    args = parser.parse_args()

    world = World.default()
    os.makedirs(args.out, exist_ok=True)
    named_reports = []
    for seed in args.seeds:
        t0 = time.time()
        results = run_ablation_suite(
            world, seed, epochs=args.epochs, bench_sessions=args.bench_sessions,
            progress=lambda v, e, m: print(
                f"  seed {seed} {v} epoch {e}: success {m['success_rate']:.3f}", flush=True
            ) if e % 10 == 0 else None,
        )
        for variant in ABLATION_ORDER:
            named_reports.append((variant, results[variant]["report"]))
            with open(os.path.join(args.out, f"seed{seed}_{variant}.json"), "w") as fh:
                fh.write(results[variant]["report"].serialize())
        print(f"seed {seed} done in {(time.time() - t0) / 60:.1f} min", flush=True)
    text, table = compare(named_reports)
    print(text)
    with open(os.path.join(args.out, "ablation_table.json"), "w") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
