#!/usr/bin/env python3
"""Benchmark the oracle rule pipeline (act level) and, optionally, a trained
snapshot, printing the standard metric table.

Usage: python scripts/quick_benchmark.py [--snapshot runs/latest/final]
       [--sessions 200] [--seed 5]
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from pipedial.benchmark import run_benchmark, run_benchmark_snapshot
from pipedial.config import RunConfig
from pipedial.rule_policy import RuleSystemPolicy
from pipedial.snapshot import Snapshot, World


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--snapshot", help="trained snapshot directory (optional)")
    parser.add_argument("--sessions", type=int, default=200)
    parser.add_argument("--seed", type=int, default=5)
    args = parser.parse_args()

    world = World.default()
    config = RunConfig()
    oracle = run_benchmark(
        world, config, RuleSystemPolicy(world.ontology), args.sessions, args.seed, act_level=True
    )
    print("oracle rule pipeline (dialog-act level):")
    print(oracle.text_table())
    if args.snapshot:
        report = run_benchmark_snapshot(Snapshot.load(args.snapshot), args.sessions, args.seed)
        print(f"snapshot {args.snapshot}:")
        print(report.text_table())
    return 0


if __name__ == "__main__":
    sys.exit(main())
