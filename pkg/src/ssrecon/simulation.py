"""Phantoms, coil fields, Cartesian sampling masks and noisy k-space acquisition.

Prospective acquisitions are modelled by an echo-train schedule: each sampled
location is attenuated by ``exp(-e / decay_tau)`` where ``e`` is its echo index
inside its train. Retrospective data are a fully sampled acquisition with the
mask applied afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import MultiCoilKSpace, SamplingMask, SensitivityMaps, acs_slices
from .forward_model import fft2c

KINDS = ("shepp_logan", "resolution_grid", "textured_produce")

# Modified (Toft) Shepp-Logan: intensity, semi-axis a, semi-axis b, x0, y0, angle (deg)
SHEPP_LOGAN = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
]


@dataclass(frozen=True, eq=False)
class Phantom:
    kind: str
    image: np.ndarray
    descriptor: list = field(default_factory=list)


def _grid(size):
    c = (np.arange(size) + 0.5) * 2.0 / size - 1.0
    x, y = np.meshgrid(c, -c)  # row 0 is the top (+y)
    return x, y


def _ellipse(x, y, a, b, x0, y0, deg):
    t = np.deg2rad(deg)
    xr = (x - x0) * np.cos(t) + (y - y0) * np.sin(t)
    yr = -(x - x0) * np.sin(t) + (y - y0) * np.cos(t)
    return (xr / a) ** 2 + (yr / b) ** 2 <= 1.0


def _shepp_logan(size, z):
    x, y = _grid(size)
    s = np.sqrt(max(1.0 - (z / 1.1) ** 2, 0.05))
    img = np.zeros((size, size))
    desc = []
    for k, (rho, a, b, x0, y0, deg) in enumerate(SHEPP_LOGAN):
        if k >= 2:
            y0 = y0 + 0.15 * z  # interior structures drift through the stack
        img[_ellipse(x, y, a * s, b * s, x0, y0, deg)] += rho
        desc.append(dict(shape="ellipse", intensity=rho, a=a * s, b=b * s, x0=x0, y0=y0, angle=deg))
    return img, desc


def _resolution_grid(size, rng, z):
    x, y = _grid(size)
    img = np.zeros((size, size))
    body = x ** 2 + y ** 2 <= 0.85 ** 2
    img[body] = 0.5
    desc = [dict(shape="disk", intensity=0.5, r=0.85, x0=0.0, y0=0.0)]
    # bar plates of decreasing period, hyper-intense
    dy = 0.02 * rng.standard_normal() + 0.05 * z
    for k, width in enumerate((0.08, 0.06, 0.045, 0.03)):
        x0 = -0.55 + 0.3 * k
        for j in range(4):
            xc = x0 + 2 * j * width
            bar = (np.abs(x - xc) <= width / 2) & (y > 0.1 + dy) & (y < 0.55 + dy)
            img[bar & body] = 1.0
            desc.append(dict(shape="bar", intensity=1.0, x0=xc, width=width, y0=0.1 + dy, y1=0.55 + dy))
    # hypo-intense disks of decreasing radius
    for k, r in enumerate((0.1, 0.07, 0.05, 0.035, 0.025)):
        xc, yc = -0.5 + 0.25 * k, -0.35 + 0.03 * rng.standard_normal()
        img[(x - xc) ** 2 + (y - yc) ** 2 <= r ** 2] = 0.1
        desc.append(dict(shape="disk", intensity=0.1, r=r, x0=xc, y0=yc))
    # a hyper-intense rod pair at the bottom
    for xc in (-0.15, 0.15):
        img[(x - xc) ** 2 + (y + 0.65) ** 2 <= 0.05 ** 2] = 0.9
        desc.append(dict(shape="disk", intensity=0.9, r=0.05, x0=xc, y0=-0.65))
    return img, desc


def _smooth_noise(rng, size, cutoff):
    k = np.fft.fftfreq(size)
    kx, ky = np.meshgrid(k, k)
    filt = np.exp(-(kx ** 2 + ky ** 2) / (2 * cutoff ** 2))
    n = np.real(np.fft.ifft2(np.fft.fft2(rng.standard_normal((size, size))) * filt))
    return n / (np.abs(n).max() + 1e-12)


def _textured_produce(size, rng, z):
    x, y = _grid(size)
    img = np.zeros((size, size))
    desc = []
    n_blobs = 6
    for i in range(n_blobs):
        ang = 2 * np.pi * i / n_blobs + 0.3 * rng.standard_normal()
        rad = 0.4 + 0.1 * rng.random()
        x0, y0 = rad * np.cos(ang), rad * np.sin(ang)
        a = (0.22 + 0.1 * rng.random()) * np.sqrt(max(1 - z ** 2, 0.3))
        b = a * (0.7 + 0.3 * rng.random())
        deg = 180 * rng.random()
        t = np.deg2rad(deg)
        xr = (x - x0) * np.cos(t) + (y - y0) * np.sin(t)
        yr = -(x - x0) * np.sin(t) + (y - y0) * np.cos(t)
        d = np.sqrt((xr / a) ** 2 + (yr / b) ** 2)
        inside = d <= 1.0
        base = 0.6 + 0.4 * rng.random()
        # rind + fibrous texture + seeds
        rind = np.clip((d - 0.85) / 0.15, 0, 1)
        fibre = 0.5 + 0.5 * np.tanh(3 * np.sin((6 + 6 * rng.random()) * np.arctan2(yr, xr) + 10 * d))
        tex = _smooth_noise(rng, size, 0.08)
        val = base * (1 - 0.6 * rind) * np.clip(0.15 + 0.75 * fibre + 0.3 * tex, 0, 1)
        seeds = (np.sin(40 * xr) * np.sin(40 * yr) > 0.6) & (d < 0.6)
        val = np.where(seeds, 0.05, val)
        img = np.where(inside, np.maximum(img, val), img)
        desc.append(dict(shape="blob", x0=x0, y0=y0, a=a, b=b, angle=deg, base=base))
    return np.clip(img, 0.0, 1.0), desc


def make_phantom(kind: str, size: int, seed: int = 0, z: float = 0.0) -> Phantom:
    """Ground-truth image with magnitude in [0, 1].

    `z` in [-1, 1] selects a cross-section, so a stack of `z` values behaves
    like slices of a volume.
    """
    if size < 32:
        raise ValueError(f"size must be at least 32, got {size}")
    rng = np.random.default_rng(seed)
    if kind == "shepp_logan":
        img, desc = _shepp_logan(size, z)
    elif kind == "resolution_grid":
        img, desc = _resolution_grid(size, rng, z)
    elif kind == "textured_produce":
        img, desc = _textured_produce(size, rng, z)
    else:
        raise ValueError(f"unknown phantom kind {kind!r}; expected one of {KINDS}")
    img = np.clip(img, 0.0, 1.0).astype(np.complex128)
    img.setflags(write=False)
    return Phantom(kind, img, desc)


def make_slices(kind: str, size: int, n: int, seed: int = 0, z_range: float = 0.4):
    zs = np.linspace(-z_range, z_range, n) if n > 1 else [0.0]
    return [make_phantom(kind, size, seed + i, float(z)) for i, z in enumerate(zs)]


def simulate_coils(ncoils: int, size: int, seed: int = 0, width: float = 0.9) -> SensitivityMaps:
    """Gaussian receive lobes around the FOV with smooth random phase, RSS-normalised.

    The support is the whole field of view: every simulated phantom lies
    inside it and the maps are nonzero everywhere.
    """
    if ncoils < 1:
        raise ValueError(f"ncoils must be positive, got {ncoils}")
    rng = np.random.default_rng(seed)
    x, y = _grid(size)
    offset = 2 * np.pi * rng.random()
    maps = np.empty((ncoils, size, size), np.complex128)
    for c in range(ncoils):
        ang = offset + 2 * np.pi * c / ncoils
        cx, cy = 1.3 * np.cos(ang), 1.3 * np.sin(ang)
        mag = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * width ** 2))
        p = rng.standard_normal(3) * np.array([np.pi, 0.5, 0.5])
        maps[c] = mag * np.exp(1j * (p[0] + p[1] * x + p[2] * y))
    rss = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    support = np.ones((size, size), bool)
    return SensitivityMaps(maps / rss, support)


def _as_hw(size):
    return (size, size) if np.isscalar(size) else tuple(size)


def _acs_values(shape, acs):
    hy, hx = (acs, acs) if np.isscalar(acs) else acs
    v = np.zeros(shape, bool)
    v[acs_slices(shape, (hy, hx))] = True
    return v, (int(hy), int(hx))


def _disk_offsets(r):
    R = int(np.ceil(r))
    dy, dx = np.mgrid[-R:R + 1, -R:R + 1]
    keep = dy ** 2 + dx ** 2 < r * r
    return dy[keep], dx[keep], R


def _greedy_poisson(order, shape, radius):
    """Accept candidates in `order` unless an accepted point lies closer than `radius`."""
    h, w = shape
    dy, dx, R = _disk_offsets(radius)
    blocked = np.zeros((h + 2 * R, w + 2 * R), bool)
    accepted = np.zeros(shape, bool)
    for idx in order:
        i, j = divmod(int(idx), w)
        if blocked[i + R, j + R]:
            continue
        accepted[i, j] = True
        blocked[i + R + dy, j + R + dx] = True
    return accepted


def poisson_disk_mask(size, accel_target: float, acs=8, seed: int = 0, tol: float = 0.1,
                      return_radius: bool = False):
    """Uniform Poisson-disk pattern on the integer grid with a forced ACS block.

    Candidates are visited in one seeded random order. The largest minimum
    distance that still yields at least the target number of samples is found
    by bisection; surplus points are then dropped from the end of the visiting
    order (which cannot shrink any pairwise distance), so the acceleration is
    as close to the target as integer counts allow.
    """
    shape = _as_hw(size)
    if accel_target < 1:
        raise ValueError(f"accel_target must be >= 1, got {accel_target}")
    acs_v, acs_hw = _acs_values(shape, acs)
    total = shape[0] * shape[1]
    if accel_target == 1:
        mask = SamplingMask(np.ones(shape, bool), acs_hw)
        return (mask, 1.0) if return_radius else mask
    want = int(round(total / accel_target))
    if want < acs_v.sum() or want < 1:
        raise ValueError(f"acceleration {accel_target} unreachable for shape {shape} with ACS {acs_hw}")
    rng = np.random.default_rng(seed)
    cand = np.flatnonzero(~acs_v.ravel())
    order = cand[rng.permutation(len(cand))]

    # r = 1 accepts every candidate; count is nonincreasing in r
    lo, hi = 1.0, float(max(shape))
    for _ in range(40):
        r = 0.5 * (lo + hi)
        n = (_greedy_poisson(order, shape, r) | acs_v).sum()
        lo, hi = (r, hi) if n >= want else (lo, r)
    v = _greedy_poisson(order, shape, lo) | acs_v
    surplus = int(v.sum()) - want
    if surplus > 0:
        flat = v.ravel()
        picked = order[flat[order]]
        flat[picked[len(picked) - surplus:]] = False
        v = flat.reshape(shape)
    achieved = total / v.sum()
    if abs(achieved - accel_target) / accel_target > tol:
        raise ValueError(f"acceleration {accel_target} unreachable for shape {shape} with ACS {acs_hw}")
    mask = SamplingMask(v, acs_hw)
    return (mask, lo) if return_radius else mask


def _radius(shape):
    h, w = shape
    ky, kx = np.mgrid[:h, :w]
    return np.hypot(ky - h // 2, kx - w // 2)


def variable_density_mask(size, accel_target: float, acs=8, decay_power: float = 2.0,
                          seed: int = 0, tol: float = 0.1) -> SamplingMask:
    """Bernoulli mask with density ``min(1, c (1 - r/r_max)^p)``, `c` calibrated to the target."""
    shape = _as_hw(size)
    if accel_target < 1:
        raise ValueError(f"accel_target must be >= 1, got {accel_target}")
    acs_v, acs_hw = _acs_values(shape, acs)
    total = shape[0] * shape[1]
    if accel_target == 1:
        return SamplingMask(np.ones(shape, bool), acs_hw)
    rho = _radius(shape)
    base = (1 - rho / (rho.max() + 1e-9)) ** decay_power
    want = total / accel_target - acs_v.sum()
    if want <= 0 or want > (~acs_v).sum():
        raise ValueError(f"acceleration {accel_target} unreachable for shape {shape} with ACS {acs_hw}")

    def expected(c):
        return np.minimum(1.0, c * base)[~acs_v].sum()

    lo, hi = 0.0, 1.0
    while expected(hi) < want:
        hi *= 2
        if hi > 1e12:
            raise ValueError(f"acceleration {accel_target} unreachable")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if expected(mid) < want else (lo, mid)
    pdf = np.minimum(1.0, hi * base)
    rng = np.random.default_rng(seed)
    v = (rng.random(shape) < pdf) | acs_v
    achieved = total / v.sum()
    if abs(achieved - accel_target) / accel_target > tol:
        raise ValueError(f"achieved acceleration {achieved:.3f} outside tolerance of {accel_target}")
    return SamplingMask(v, acs_hw)


@dataclass(frozen=True, eq=False)
class EchoTrainSchedule:
    """Acquisition order of the sampled locations, grouped into echo trains.

    ``ordering`` lists flat k-space indices train by train; train ``t`` holds
    ``ordering[starts[t]:starts[t + 1]]`` in echo order.
    """

    shape: tuple
    ordering: np.ndarray
    starts: np.ndarray
    turbo_factor: int
    decay_tau: float

    @property
    def num_trains(self):
        return len(self.starts) - 1

    def trains(self):
        return [self.ordering[self.starts[t]:self.starts[t + 1]] for t in range(self.num_trains)]

    def echo_index(self):
        """(H, W) echo index of each location, -1 where unsampled."""
        e = np.full(self.shape[0] * self.shape[1], -1, int)
        for train in self.trains():
            e[train] = np.arange(len(train))
        return e.reshape(self.shape)

    def modulation(self):
        e = self.echo_index()
        return np.where(e >= 0, np.exp(-np.maximum(e, 0) / self.decay_tau), 1.0)

    def covers(self, mask: SamplingMask) -> bool:
        return (self.shape == mask.shape and len(self.ordering) == mask.num_sampled
                and np.array_equal(np.sort(self.ordering), np.flatnonzero(mask.values.ravel())))


def echo_train_schedule(mask: SamplingMask, turbo_factor: int, ordering_policy: str = "center_out",
                        seed: int = 0, decay_tau: float | None = None) -> EchoTrainSchedule:
    """Split the sampled locations into ``ceil(n / turbo_factor)`` trains.

    Locations are ranked by the policy (``center_out``: k-space radius,
    ``linear``: raster order, ``random``) and dealt round-robin across trains,
    so echo ``e`` of every train comes from the same band of the ranking.
    `decay_tau` defaults to half the turbo factor.
    """
    if turbo_factor < 1:
        raise ValueError(f"turbo_factor must be >= 1, got {turbo_factor}")
    rng = np.random.default_rng(seed)
    pts = np.flatnonzero(mask.values.ravel())
    pts = pts[rng.permutation(len(pts))]  # random tie-breaking
    if ordering_policy == "center_out":
        ranked = pts[np.argsort(_radius(mask.shape).ravel()[pts], kind="stable")]
    elif ordering_policy == "linear":
        ranked = np.sort(pts)
    elif ordering_policy == "random":
        ranked = pts
    else:
        raise ValueError(f"unknown ordering policy {ordering_policy!r}")
    n = len(ranked)
    n_trains = max(1, -(-n // turbo_factor))
    trains = [ranked[t::n_trains] for t in range(n_trains)]
    starts = np.concatenate([[0], np.cumsum([len(t) for t in trains])])
    tau = turbo_factor / 2 if decay_tau is None else float(decay_tau)
    return EchoTrainSchedule(mask.shape, np.concatenate(trains) if trains else pts, starts,
                             int(turbo_factor), tau)


def acquire(phantom, maps: SensitivityMaps, mask: SamplingMask, noise_sigma: float,
            schedule: EchoTrainSchedule | None = None, seed: int = 0) -> MultiCoilKSpace:
    """Simulated multi-coil measurement ``mask * (relaxation * F(S_i x) + noise)``.

    Without a schedule this is a retrospective acquisition. The noise field is
    drawn for the full grid before masking, so a given seed yields the same
    noise at every location regardless of mask or schedule.
    """
    x = phantom.image if isinstance(phantom, Phantom) else np.asarray(phantom)
    if x.shape != maps.shape or mask.shape != maps.shape:
        raise ValueError(f"shape mismatch: image {x.shape}, maps {maps.shape}, mask {mask.shape}")
    k = fft2c(maps.data * x)
    if schedule is not None:
        if not schedule.covers(mask):
            raise ValueError("echo-train schedule does not cover exactly the sampled locations")
        k = k * schedule.modulation()
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((2, *k.shape))
    k = k + noise_sigma * (noise[0] + 1j * noise[1])
    return MultiCoilKSpace(k * mask.values, noise_sigma)
