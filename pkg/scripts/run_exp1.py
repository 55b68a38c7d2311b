"""Prospective vs retrospective comparison on both phantom kinds.

    python3 scripts/run_exp1.py --out runs/exp1 [--set noise_sigma=0.02 ...]

Writes one directory per phantom with containers, eval/ CSVs and a
report/ summary; prints the summary tables at the end.
"""

import argparse
import sys
from pathlib import Path

from ssrecon.cli import main


def run(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/exp1")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--workers", type=int, default=1)
    a = p.parse_args(argv)
    args = ["run", "--preset", "exp1", "--out", a.out, "--workers", str(a.workers)]
    for s in a.set:
        args += ["--set", s]
    code = main(args)
    if code == 0:
        for summary in sorted(Path(a.out).glob("*/report/summary.txt")):
            print(f"== {summary.parent.parent.name}")
            print(summary.read_text())
    return code


if __name__ == "__main__":
    sys.exit(run())
