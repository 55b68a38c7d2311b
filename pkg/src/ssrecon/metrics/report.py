"""Per-slice metric tables and their CSV form."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

HIGHER, LOWER = "higher", "lower"

DIRECTIONS = {"psnr": HIGHER, "ssim": HIGHER, "perc_dis": LOWER, "nrjpeg": HIGHER, "piqe": LOWER}


def _fmt(v):
    return repr(float(v))


@dataclass(frozen=True)
class MetricReport:
    name: str
    values: tuple
    direction: str = HIGHER
    crop: object = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.direction not in (HIGHER, LOWER):
            raise ValueError(f"direction must be {HIGHER!r} or {LOWER!r}")

    @classmethod
    def of(cls, name, values, crop=None):
        return cls(name, values, DIRECTIONS.get(name, HIGHER), crop)

    @property
    def mean(self):
        return float(np.mean(self.values)) if self.values else math.nan

    @property
    def std(self):
        if not self.values:
            return math.nan
        if len(set(self.values)) == 1:
            return 0.0  # also covers a column of inf PSNR sentinels
        with np.errstate(invalid="ignore"):
            return float(np.std(self.values))

    def better(self, a, b):
        """True if value `a` is better than `b` for this metric."""
        return a > b if self.direction == HIGHER else a < b

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["slice_index", "value"])
            for i, v in enumerate(self.values):
                w.writerow([i, _fmt(v)])
            w.writerow(["mean", _fmt(self.mean)])
            w.writerow(["std", _fmt(self.std)])

    @classmethod
    def read_csv(cls, path, name, crop=None):
        values, summary = [], {}
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        for key, val in rows[1:]:
            if key in ("mean", "std"):
                summary[key] = float(val)
            else:
                values.append(float(val))
        rep = cls.of(name, values, crop)
        return rep, summary
