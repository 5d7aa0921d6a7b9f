"""Shared argument handling for the experiment scripts."""

import argparse
import json
import sys

from momentda import experiments


def run_one(name, description, extra=None):
    parser = argparse.ArgumentParser(description=description)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=f"results/{name}")
    for flag, kw in (extra or {}).items():
        parser.add_argument(flag, **kw)
    args = parser.parse_args()
    knobs = {k: v for k, v in vars(args).items() if k not in ("seed", "out") and v is not None}
    report = experiments.run(experiments.ExperimentConfig(name, args.seed, knobs, args.out))
    for a in report.assertions:
        print(f"{'PASS' if a['passed'] else 'FAIL'}  {a['name']}")
    for table_name, table in report.tables.items():
        print(f"\n[{table_name}]")
        print("  ".join(table["columns"]))
        for row in table["rows"]:
            print("  ".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row))
    print(f"\nreport written to {args.out}/report.json")
    if not report.passed:
        print(json.dumps({"failures": report.failures}), file=sys.stderr)
        sys.exit(1)
