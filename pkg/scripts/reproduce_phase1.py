"""Recompute the pilot analysis on the built-in fixture and print every check."""

from __future__ import annotations

import argparse
import sys

from critval.reproduce import reproduce_phase1
from critval.report import dumps_json


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--json", action="store_true", help="print the full bundle instead of the check list")
    args = ap.parse_args()
    res = reproduce_phase1()
    if args.json:
        sys.stdout.write(dumps_json(res.bundle))
    else:
        for c in res.checks:
            status = "ok" if c.ok else ("KNOWN" if not c.gating else "DRIFT")
            actual = c.actual if isinstance(c.actual, (str, type(None))) else f"{c.actual:.4f}"
            print(f"{status:6s} {c.name:36s} expected {c.expected!s:8s} actual {actual}")
    return 0 if res.ok else 1


if __name__ == "__main__":
    sys.exit(main())
