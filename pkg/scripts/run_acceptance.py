#!/usr/bin/env python3
"""Run the acceptance suite and print one PASS/FAIL line per criterion.

    python3 scripts/run_acceptance.py            # all eleven criteria
    python3 scripts/run_acceptance.py --quick    # skip the scaling benchmark
"""

import argparse
import sys
from pathlib import Path

import pytest


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--quick", action="store_true", help="deselect the scaling benchmark")
    args = ap.parse_args()
    target = Path(__file__).resolve().parent.parent / "tests" / "test_acceptance.py"
    argv = [str(target), "-q", "-p", "no:cacheprovider"]
    if args.quick:
        argv += ["-m", "not slow"]
    return int(pytest.main(argv))


if __name__ == "__main__":
    sys.exit(main())
