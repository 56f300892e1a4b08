#!/usr/bin/env python3
"""Print the finite-difference gradient report for every registered op.

Usage:
    python scripts/gradcheck_report.py [--trials 6] [--seed 42]
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from attngan.gradcheck import DEFAULT_TOLERANCE, gradcheck, registered_ops  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=6)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    failed = []
    for name in registered_ops():
        report = gradcheck(name, trials=args.trials, seed=args.seed)
        status = "PASS" if report.passed else "FAIL"
        print(f"{name:24s} max_rel_error={report.max_rel_error:.3e} "
              f"points={report.points:5d} {status}")
        if not report.passed:
            failed.append(name)
    if failed:
        print(f"FAILED: {', '.join(failed)} (tolerance {DEFAULT_TOLERANCE})")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
