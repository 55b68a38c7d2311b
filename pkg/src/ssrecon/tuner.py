"""Self-supervised hyperparameter selection from held-out k-space.

Each acquired sample set is split into Theta (used to reconstruct) and Lambda
(held out). The reconstruction's predicted k-space on Lambda is compared with
the measured samples there. Because the noise on Lambda is independent of the
reconstruction, the expected score equals the error against the noiseless
k-space plus ``2 sigma^2`` per entry, so ranking by score ranks by true error.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import ReconProblem
from .forward_model import ForwardOperator
from .solvers.cs import CsConfig, cs_l1wavelet
from .solvers.ssdu import ssdu_split


@dataclass(frozen=True)
class TuneGrid:
    values: tuple
    num_splits: int = 50
    split_fraction: float = 0.6

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        object.__setattr__(self, "values", v)
        if not v:
            raise ValueError("empty grid")
        if any(x <= 0 for x in v) or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("grid values must be positive and strictly increasing")
        if self.num_splits < 1:
            raise ValueError("num_splits must be >= 1")
        if not 0 < self.split_fraction < 1:
            raise ValueError("split_fraction must lie in (0, 1)")

    @classmethod
    def log(cls, lo=1e-5, hi=1e-1, n=20, **kw):
        return cls(tuple(np.logspace(np.log10(lo), np.log10(hi), n)), **kw)


def split_seed(seed, s):
    return np.random.SeedSequence([int(seed), int(s)])


def heldout_error(x, problem: ReconProblem, lam_mask):
    """Mean ``|A x - y|^2`` over held-out entries (locations x coils)."""
    pred = ForwardOperator(problem.mask, problem.maps).forward(x)
    r = (pred - problem.kspace.data)[:, lam_mask]
    return float(np.vdot(r, r).real / r.size)


def split_scores(reconstruct, problem: ReconProblem, value, num_splits, seed, fraction=0.6):
    """Per-split held-out errors; split ``s`` is seeded by ``(seed, s)`` for every grid value."""
    if num_splits < 1:
        raise ValueError("num_splits must be >= 1")
    out = np.empty(num_splits)
    for s in range(num_splits):
        split = ssdu_split(problem.mask, fraction, split_seed(seed, s))
        x = reconstruct(problem.restricted(split.theta), value)
        out[s] = heldout_error(x, problem, split.lam.values)
    return out


def noise2self_score(reconstruct, problem: ReconProblem, value, num_splits, seed, fraction=0.6):
    """Average held-out k-space error over `num_splits` seeded splits.

    ``reconstruct(problem, value)`` must return an image from the restricted problem.
    """
    return float(split_scores(reconstruct, problem, value, num_splits, seed, fraction).mean())


def cs_reconstruct(problem, value, max_iters=200):
    return cs_l1wavelet(problem, CsConfig(lam=float(value), max_iters=max_iters))


@dataclass
class TuneResult:
    selected: float
    winners: list
    grid: TuneGrid
    scores: np.ndarray  # (problems, values, splits)
    extra: dict = field(default_factory=dict)

    @property
    def mean_score(self):
        return self.scores.mean(axis=(0, 2))

    @property
    def std_score(self):
        return self.scores.transpose(1, 0, 2).reshape(len(self.grid.values), -1).std(axis=1)

    def rows(self):
        return [(v, m, s) for v, m, s in zip(self.grid.values, self.mean_score, self.std_score)]

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["grid_value", "mean_score", "std_score"])
            for v, m, s in self.rows():
                w.writerow([repr(v), repr(float(m)), repr(float(s))])


def _job(args):
    reconstruct, problem, value, num_splits, seed, fraction = args
    return split_scores(reconstruct, problem, value, num_splits, seed, fraction)


def tune_lambda(problems, grid: TuneGrid, seed=0, reconstruct=cs_reconstruct, workers=1) -> TuneResult:
    """Pick the lowest-score grid value per problem; return their geometric mean.

    Problem ``p`` uses split seeds derived from ``(seed, p)``, shared across grid
    values so the comparison between values is paired. The score table keeps
    grid order regardless of execution order.
    """
    if not problems:
        raise ValueError("no problems to tune on")
    jobs = [(reconstruct, prob, v, grid.num_splits, np.random.SeedSequence([int(seed), p]).generate_state(1)[0],
             grid.split_fraction) for p, prob in enumerate(problems) for v in grid.values]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    scores = np.array(results).reshape(len(problems), len(grid.values), grid.num_splits)
    if not np.all(np.isfinite(scores)):
        raise FloatingPointError("non-finite tuning score")
    idx = scores.mean(axis=2).argmin(axis=1)
    winners = [grid.values[i] for i in idx]
    if len(set(winners)) == 1:
        selected = winners[0]  # exact, no exp/log round trip
    else:
        selected = float(np.exp(np.mean(np.log(winners))))
    return TuneResult(selected, winners, grid, scores)
