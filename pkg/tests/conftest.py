import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ssrecon.core import MultiCoilKSpace, ReconProblem, SamplingMask, SensitivityMaps
from ssrecon.forward_model import ForwardOperator
from ssrecon.simulation import acquire, make_phantom, poisson_disk_mask, simulate_coils

settings.register_profile("ci", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_maps(rng, coils, shape):
    s = crandn(rng, coils, *shape)
    s /= np.sqrt(np.sum(np.abs(s) ** 2, axis=0))
    return SensitivityMaps(s, np.ones(shape, bool))


def random_mask(rng, shape, density=0.4):
    v = rng.random(shape) < density
    v[shape[0] // 2, shape[1] // 2] = True
    return SamplingMask(v)


def random_problem(rng, shape=(8, 8), coils=3, density=0.4, noise=0.0):
    maps = random_maps(rng, coils, shape)
    mask = random_mask(rng, shape, density)
    x = crandn(rng, *shape)
    y = ForwardOperator(mask, maps).forward(x) + noise * crandn(rng, coils, *shape) * mask.values
    return ReconProblem(MultiCoilKSpace(y, noise), mask, maps), x


def phantom_problem(size=64, coils=4, accel=None, noise=0.0, acs=8, seed=0, kind="shepp_logan"):
    ph = make_phantom(kind, size, seed)
    maps = simulate_coils(coils, size, seed)
    if accel is None:
        mask = SamplingMask(np.ones((size, size), bool), (acs, acs))
    else:
        mask = poisson_disk_mask(size, accel, acs, seed)
    ksp = acquire(ph, maps, mask, noise, seed=seed + 1)
    return ReconProblem(ksp, mask, maps), np.asarray(ph.image)


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
