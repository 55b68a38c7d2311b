import numpy as np
import pytest
from hypothesis import given, strategies as st

from ssrecon.core import SamplingMask, validate, ReconProblem
from ssrecon.forward_model import ifft2c
from ssrecon.metrics import psnr
from ssrecon.simulation import (KINDS, acquire, echo_train_schedule, make_phantom, make_slices,
                                poisson_disk_mask, simulate_coils, variable_density_mask)
from ssrecon.solvers import cg_sense

# regression anchors recorded on first run
SL_VAR_128 = 0.05952770000987798
TEXTURED_VAR_128 = 0.07216229782823046
COIL_GRADIENT_MAX = 0.05  # largest neighbour difference seen at 64x64 was 0.036 (4 coils)


def support_var(img):
    m = np.abs(img)
    return float(np.var(m[m > 0]))


def test_shepp_logan_definition():
    ph = make_phantom("shepp_logan", 64)
    img = np.abs(ph.image)
    assert img.max() == 1.0
    assert img[0, 0] == 0 and img[-1, -1] == 0 and img[0, 32] == 0
    assert len(ph.descriptor) == 10
    assert np.all(ph.image.imag == 0)


@pytest.mark.parametrize("kind", KINDS)
def test_phantoms_deterministic_and_bounded(kind):
    a = make_phantom(kind, 64, seed=4)
    b = make_phantom(kind, 64, seed=4)
    assert np.array_equal(a.image, b.image)
    m = np.abs(a.image)
    assert m.max() <= 1 and m.min() >= 0 and np.any(m > 0)


def test_phantom_errors():
    with pytest.raises(ValueError):
        make_phantom("banana", 64)
    with pytest.raises(ValueError):
        make_phantom("shepp_logan", 16)


def test_textured_variance_exceeds_shepp_logan():
    sl = support_var(make_phantom("shepp_logan", 128).image)
    tx = support_var(make_phantom("textured_produce", 128, 0).image)
    assert sl == pytest.approx(SL_VAR_128, rel=1e-12)
    assert tx == pytest.approx(TEXTURED_VAR_128, rel=1e-12)
    for seed in range(5):
        assert support_var(make_phantom("textured_produce", 128, seed).image) > sl


def test_slices_are_distinct():
    sl = make_slices("shepp_logan", 64, 20)
    assert len(sl) == 20
    assert all(not np.array_equal(a.image, b.image) for i, a in enumerate(sl) for b in sl[i + 1:])


@pytest.mark.parametrize("n", [1, 2, 5, 8, 32])
def test_coil_normalisation(n):
    maps = simulate_coils(n, 64, 0)
    power = np.sum(np.abs(maps.data) ** 2, axis=0)
    assert np.max(np.abs(power[maps.support] - 1)) < 1e-6
    if n == 1:
        assert np.allclose(np.abs(maps.data[0][maps.support]), 1, atol=1e-12)
    g = max(np.abs(np.diff(maps.data, axis=1)).max(), np.abs(np.diff(maps.data, axis=2)).max())
    assert g < COIL_GRADIENT_MAX
    with pytest.raises(ValueError):
        simulate_coils(0, 64)


def test_poisson_full_and_target():
    m = poisson_disk_mask(64, 1, 8, 0)
    assert m.values.all()
    m, r = poisson_disk_mask(128, 5, 8, 0, return_radius=True)
    assert 4.5 <= m.acceleration <= 5.5
    assert m.values[m.acs_slices()].all()
    # minimum-distance property outside the ACS block
    acs = np.zeros(m.shape, bool)
    acs[m.acs_slices()] = True
    pts = np.argwhere(m.values & ~acs)
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, 10 ** 9)
    assert np.sqrt(d2.min()) >= r - 1e-9


def test_poisson_unreachable():
    with pytest.raises(ValueError, match="unreachable"):
        poisson_disk_mask(32, 5, 8, 0)
    with pytest.raises(ValueError):
        poisson_disk_mask(32, 0.5, 4, 0)


@given(seed=st.integers(0, 10 ** 6), accel=st.floats(2, 8))
def test_poisson_tolerance_property(seed, accel):
    m = poisson_disk_mask(64, accel, 4, seed)
    assert abs(m.acceleration - accel) / accel <= 0.1
    assert m.values[m.acs_slices()].all()


def test_variable_density():
    assert variable_density_mask(64, 1, 8).values.all()
    m = variable_density_mask(128, 5, 8, seed=0)
    assert 4.5 <= m.acceleration <= 5.5 and m.values[m.acs_slices()].all()
    # average density falls with radius
    h = 64
    ky, kx = np.mgrid[:h, :h]
    rad = np.hypot(ky - h // 2, kx - h // 2)
    bins = np.digitize(rad, [8, 16, 24, 32])
    dens = np.zeros(5)
    for seed in range(50):
        v = variable_density_mask(h, 4, 2, seed=seed).values
        dens += [v[bins == b].mean() for b in range(5)]
    assert np.all(np.diff(dens) <= 0)


def test_echo_train_single_and_partition():
    mask = poisson_disk_mask(64, 5, 8, 0)
    n = mask.num_sampled
    s = echo_train_schedule(mask, n + 10)
    assert s.num_trains == 1
    for policy in ("center_out", "linear", "random"):
        s = echo_train_schedule(mask, 16, policy, seed=2)
        assert s.num_trains == -(-n // 16)
        assert s.covers(mask)
        assert sorted(s.ordering.tolist()) == sorted(np.flatnonzero(mask.values).tolist())
    with pytest.raises(ValueError):
        echo_train_schedule(mask, 0)
    with pytest.raises(ValueError):
        echo_train_schedule(mask, 4, "spiral")


@pytest.mark.parametrize("seed", range(5))
def test_center_out_radius_nondecreasing(seed):
    mask = poisson_disk_mask(64, 5, 8, seed)
    s = echo_train_schedule(mask, 16, "center_out", seed=seed)
    rad = np.hypot(*(np.unravel_index(np.arange(64 * 64), (64, 64)) - np.array([[32], [32]])))
    for train in s.trains():
        assert np.all(np.diff(rad[train]) >= 0)


def test_acquire_noiseless_full():
    ph = make_phantom("shepp_logan", 64)
    maps = simulate_coils(4, 64, 0)
    mask = SamplingMask(np.ones((64, 64), bool))
    k = acquire(ph, maps, mask, 0.0)
    assert np.max(np.abs(ifft2c(k.data) - maps.data * ph.image)) < 1e-12


def test_acquire_pattern_and_seed():
    ph = make_phantom("shepp_logan", 64)
    maps = simulate_coils(4, 64, 0)
    mask = poisson_disk_mask(64, 5, 8, 0)
    a = acquire(ph, maps, mask, 0.05, seed=3)
    b = acquire(ph, maps, mask, 0.05, seed=3)
    c = acquire(ph, maps, mask, 0.05, seed=4)
    assert np.array_equal(a.data, b.data) and not np.array_equal(a.data, c.data)
    assert np.all(a.data[:, ~mask.values] == 0)
    assert validate(ReconProblem(a, mask, maps)) == []


def test_acquire_infinite_tau_is_retrospective():
    ph = make_phantom("shepp_logan", 64)
    maps = simulate_coils(4, 64, 0)
    mask = poisson_disk_mask(64, 5, 8, 0)
    sched = echo_train_schedule(mask, 16, decay_tau=np.inf)
    assert np.array_equal(acquire(ph, maps, mask, 0.01, sched, seed=1).data,
                          acquire(ph, maps, mask, 0.01, None, seed=1).data)


def test_acquire_errors():
    ph = make_phantom("shepp_logan", 64)
    maps = simulate_coils(4, 64, 0)
    mask = poisson_disk_mask(64, 5, 8, 0)
    other = echo_train_schedule(poisson_disk_mask(64, 5, 8, 1), 16)
    with pytest.raises(ValueError, match="schedule"):
        acquire(ph, maps, mask, 0.0, other)
    with pytest.raises(ValueError, match="shape"):
        acquire(make_phantom("shepp_logan", 32), maps, mask, 0.0)


def test_prospective_gap_shrinks_with_tau():
    ph = make_phantom("shepp_logan", 64)
    maps = simulate_coils(8, 64, 0)
    mask = poisson_disk_mask(64, 5, 8, 0)
    truth = np.abs(ph.image)
    retro = psnr(np.abs(cg_sense(ReconProblem(acquire(ph, maps, mask, 0.01, seed=1), mask, maps))), truth)
    gaps = []
    for tau in (4.0, 8.0, 32.0):
        sched = echo_train_schedule(mask, 16, decay_tau=tau)
        x = cg_sense(ReconProblem(acquire(ph, maps, mask, 0.01, sched, seed=1), mask, maps))
        gaps.append(retro - psnr(np.abs(x), truth))
    assert gaps[0] > 0
    assert gaps[0] >= gaps[1] >= gaps[2]
