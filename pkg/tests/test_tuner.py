import numpy as np
import pytest

from ssrecon.core import MultiCoilKSpace, ReconProblem
from ssrecon.forward_model import ForwardOperator
from ssrecon.solvers import ssdu_split
from ssrecon.tuner import TuneGrid, cs_reconstruct, noise2self_score, split_seed, tune_lambda

from conftest import phantom_problem
from oracles import noise2self_trials, supervised_selection, tikhonov, tuning_problems


def test_grid_validation():
    g = TuneGrid.log(1e-5, 1e-1, 20)
    assert len(g.values) == 20 and g.values[0] == pytest.approx(1e-5) and g.values[-1] == pytest.approx(1e-1)
    for bad in [(), (1.0, 1.0), (2.0, 1.0), (-1.0,)]:
        with pytest.raises(ValueError):
            TuneGrid(bad)
    with pytest.raises(ValueError):
        TuneGrid((1.0,), num_splits=0)
    with pytest.raises(ValueError):
        TuneGrid((1.0,), split_fraction=1.0)


def test_oracle_reconstructor_scores_zero():
    prob, truth = phantom_problem(32, coils=4, accel=3, acs=4)
    assert noise2self_score(lambda p, v: truth, prob, 1.0, 10, seed=0) < 1e-12


def test_zero_reconstructor_scores_heldout_energy():
    prob, _ = phantom_problem(32, coils=4, accel=3, acs=4, noise=0.01)
    score = noise2self_score(lambda p, v: np.zeros(p.shape, complex), prob, 1.0, 10, seed=4)
    expect = []
    for s in range(10):
        lam = ssdu_split(prob.mask, 0.6, split_seed(4, s)).lam.values
        expect.append(np.mean(np.abs(prob.kspace.data[:, lam]) ** 2))
    assert score == pytest.approx(np.mean(expect), rel=1e-12)


def test_noise2self_identity_monte_carlo():
    excess, truth = noise2self_trials(trials=60)
    d = excess - truth
    se = d.std(ddof=1) / np.sqrt(len(d))
    assert abs(d.mean()) <= 3 * se


def test_single_value_grid():
    prob, _ = phantom_problem(32, coils=4, accel=3, acs=4, noise=0.01)
    res = tune_lambda([prob], TuneGrid((3e-3,), num_splits=2), reconstruct=tikhonov)
    assert res.selected == 3e-3 and res.winners == [3e-3]


def test_table_reproducible_and_csv(tmp_path):
    probs = [p for p, _ in tuning_problems(2)]
    grid = TuneGrid.log(1e-3, 1e-1, 3, num_splits=3)
    a = tune_lambda(probs, grid, seed=1, reconstruct=tikhonov)
    b = tune_lambda(probs, grid, seed=1, reconstruct=tikhonov)
    assert np.array_equal(a.scores, b.scores) and a.selected == b.selected
    assert a.scores.shape == (2, 3, 3) and np.all(np.isfinite(a.scores)) and np.all(a.scores >= 0)
    a.write_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "grid_value,mean_score,std_score" and len(lines) == 4


def test_parallel_matches_serial():
    probs = [p for p, _ in tuning_problems(2)]
    grid = TuneGrid.log(1e-3, 1e-1, 2, num_splits=2)
    a = tune_lambda(probs, grid, seed=3, reconstruct=cs_reconstruct)
    b = tune_lambda(probs, grid, seed=3, reconstruct=cs_reconstruct, workers=2)
    assert np.array_equal(a.scores, b.scores)


def test_selection_invariant_to_data_scale():
    # a linear reconstructor scales every score by c^2 when the data scale by c
    prob, _ = tuning_problems(1)[0]
    scaled = ReconProblem(MultiCoilKSpace(prob.kspace.data * 7.0), prob.mask, prob.maps)
    grid = TuneGrid.log(1e-3, 1e-1, 5, num_splits=3)
    a = tune_lambda([prob], grid, reconstruct=tikhonov)
    b = tune_lambda([scaled], grid, reconstruct=lambda p, v: tikhonov(p, v))
    assert a.selected == b.selected
    assert np.allclose(b.scores, 49.0 * a.scores, rtol=1e-8)


def test_self_supervised_agrees_with_supervised_small():
    pairs = tuning_problems(2)
    probs, truths = [p for p, _ in pairs], [t for _, t in pairs]
    grid = TuneGrid.log(1e-5, 1e-1, 9, num_splits=8)
    rec = lambda p, v: cs_reconstruct(p, v, max_iters=60)
    res = tune_lambda(probs, grid, seed=0, reconstruct=rec)
    sup, _ = supervised_selection(probs, truths, grid, rec)
    step = np.log(grid.values[1] / grid.values[0])
    assert abs(np.log(res.selected / sup)) <= step + 1e-12


def test_empty_problems():
    with pytest.raises(ValueError):
        tune_lambda([], TuneGrid((1.0,)))
    prob, _ = phantom_problem(32, coils=2, accel=3, acs=4)
    with pytest.raises(ValueError):
        noise2self_score(tikhonov, prob, 1.0, 0, seed=0)
