"""Run every experiment except the sweep and summarize the assertions."""

import argparse
import sys

from momentda import experiments

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--out", default="results")
    args = parser.parse_args()
    failed = []
    for name in experiments.EXPERIMENTS:
        if name == "sweep":
            continue
        cfg = experiments.ExperimentConfig(name, args.seed, {}, f"{args.out}/{name}")
        report = experiments.run(cfg)
        print(f"{name:18s} {'PASS' if report.passed else 'FAIL'}  "
              f"({sum(a['passed'] for a in report.assertions)}/{len(report.assertions)})")
        failed += [f"{name}:{f}" for f in report.failures]
    if failed:
        print("failed:", ", ".join(failed), file=sys.stderr)
        sys.exit(1)
