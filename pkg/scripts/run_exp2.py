"""No-reference sweep over phantom kind, coils, noise level and acceleration.

    python3 scripts/run_exp2.py --out runs/exp2

The full matrix is 2 x 3 x 2 x 4 = 48 cells; expect hours on one core.
Narrow it with --set (e.g. methods=cgsense,cs) for a quick look.
"""

import argparse
import csv
import sys
from collections import defaultdict
from pathlib import Path

from ssrecon.cli import main


def run(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/exp2")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--workers", type=int, default=1)
    a = p.parse_args(argv)
    args = ["run", "--preset", "exp2", "--out", a.out, "--workers", str(a.workers)]
    for s in a.set:
        args += ["--set", s]
    code = main(args)
    if code != 0:
        return code
    # mean of each metric per method across the whole sweep
    acc = defaultdict(list)
    with open(Path(a.out) / "exp2_summary.csv", newline="") as f:
        for row in csv.DictReader(f):
            acc[(row["method"], row["metric"])].append(float(row["mean"]))
    for (method, metric), vals in sorted(acc.items()):
        print(f"{method:24s} {metric:8s} {sum(vals) / len(vals):9.4f}  ({len(vals)} cells)")
    return 0


if __name__ == "__main__":
    sys.exit(run())
