#!/usr/bin/env python3
"""Run the full default sweep (3 integrands x 4 coefficients x 4 data) and
print the pass/fail matrix.

All 48 points are solved at 128 cells with the default truncation
schedules, the full estimate battery, and the minimality check; artifacts
land under --out (matrix CSV, aggregated JSON, per-point directories).

Usage: python scripts/run_default_sweep.py [--out sweep_out] [--seed 0]
                                           [--jobs 1]
"""

import argparse
import csv
import os

from varlab.cli import main as cli_main


def run() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="sweep_out")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()

    code = cli_main(["sweep", "--out", args.out, "--seed", str(args.seed),
                     "--jobs", str(args.jobs)])

    matrix = os.path.join(args.out, "sweep_matrix.csv")
    if os.path.exists(matrix):
        with open(matrix, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        for row in rows:
            print("  ".join(cell.ljust(widths[i])
                            for i, cell in enumerate(row)))
        passed = sum(1 for r in body if r[-1] == "0")
        print(f"\n{passed}/{len(body)} points passed; exit code {code}")
    return code


if __name__ == "__main__":
    raise SystemExit(run())
