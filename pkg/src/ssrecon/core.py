"""Shared data types for multi-coil Cartesian reconstruction.

Images are plain ``complex128`` arrays of shape ``(H, W)``. The containers
below hold the measurement-side operands; all of them freeze their arrays on
construction so instances can be shared between workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

COIL_POWER_TOL = 1e-6


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def as_image(x) -> np.ndarray:
    """Return `x` as a finite 2D complex128 array, raising on bad input."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 2 or 0 in x.shape:
        raise ValueError(f"expected a non-empty 2D image, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("image contains non-finite values")
    return x


def image_violations(x) -> list[str]:
    x = np.asarray(x)
    out = []
    if x.ndim != 2 or 0 in x.shape:
        out.append(f"image shape: expected non-empty 2D, got {x.shape}")
    elif not np.all(np.isfinite(x)):
        out.append("image finite: contains NaN/Inf")
    return out


@dataclass(frozen=True, eq=False)
class SamplingMask:
    """Binary phase-encode sampling pattern with a centred, fully sampled ACS block.

    ``acs`` holds the half-widths ``(hy, hx)``; the block covers rows
    ``H//2 - hy : H//2 + hy`` and the analogous columns. ``(0, 0)`` means no ACS.
    """

    values: np.ndarray
    acs: tuple[int, int] = (0, 0)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, bool))
        object.__setattr__(self, "acs", (int(self.acs[0]), int(self.acs[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def num_sampled(self) -> int:
        return int(self.values.sum())

    @property
    def acceleration(self) -> float:
        n = self.num_sampled
        return float("inf") if n == 0 else self.values.size / n

    def acs_slices(self) -> tuple[slice, slice]:
        return acs_slices(self.shape, self.acs)

    def restrict(self, values) -> "SamplingMask":
        """A sub-mask (e.g. one half of a split); ACS metadata is dropped."""
        return SamplingMask(np.asarray(values, bool) & self.values, (0, 0))

    def __eq__(self, other):
        if not isinstance(other, SamplingMask):
            return NotImplemented
        return self.acs == other.acs and np.array_equal(self.values, other.values)


def acs_slices(shape, acs) -> tuple[slice, slice]:
    (h, w), (hy, hx) = shape, acs
    return slice(h // 2 - hy, h // 2 + hy), slice(w // 2 - hx, w // 2 + hx)


@dataclass(frozen=True, eq=False)
class SensitivityMaps:
    """Per-coil complex receive fields ``data[c]`` with the object support.

    On ``support`` the coil power sum is one; outside it every coil is zero.
    """

    data: np.ndarray
    support: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data, np.complex128))
        object.__setattr__(self, "support", _frozen(self.support, bool))
        if self.data.ndim != 3:
            raise ValueError(f"maps must be (coils, H, W), got {self.data.shape}")

    @property
    def num_coils(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[1:]

    def __eq__(self, other):
        if not isinstance(other, SensitivityMaps):
            return NotImplemented
        return np.array_equal(self.data, other.data) and np.array_equal(self.support, other.support)


@dataclass(frozen=True, eq=False)
class MultiCoilKSpace:
    """Per-coil k-space samples; ``noise_sigma`` is the per-component noise std."""

    data: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data, np.complex128))
        object.__setattr__(self, "noise_sigma", float(self.noise_sigma))
        if self.data.ndim != 3:
            raise ValueError(f"k-space must be (coils, H, W), got {self.data.shape}")

    @property
    def num_coils(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[1:]

    def __eq__(self, other):
        if not isinstance(other, MultiCoilKSpace):
            return NotImplemented
        return self.noise_sigma == other.noise_sigma and np.array_equal(self.data, other.data)


@dataclass(frozen=True)
class ReconProblem:
    kspace: MultiCoilKSpace
    mask: SamplingMask
    maps: SensitivityMaps
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def restricted(self, mask: SamplingMask) -> "ReconProblem":
        """Same problem seeing only the k-space locations in `mask`."""
        data = self.kspace.data * mask.values
        return ReconProblem(MultiCoilKSpace(data, self.kspace.noise_sigma), mask, self.maps, self.meta)


def mask_violations(mask: SamplingMask) -> list[str]:
    out = []
    v = mask.values
    if v.ndim != 2:
        return [f"mask shape: expected 2D, got {v.shape}"]
    hy, hx = mask.acs
    if hy < 0 or hx < 0 or 2 * hy > v.shape[0] or 2 * hx > v.shape[1]:
        out.append(f"acs geometry: half-widths {mask.acs} do not fit {v.shape}")
    elif not v[mask.acs_slices()].all():
        out.append("acs fully sampled: mask has zeros inside the ACS block")
    if mask.num_sampled == 0:
        out.append("acceleration finite: mask samples nothing")
    return out


def maps_violations(maps: SensitivityMaps, tol: float = COIL_POWER_TOL) -> list[str]:
    out = []
    if maps.support.shape != maps.shape:
        return [f"maps shape: support {maps.support.shape} vs maps {maps.shape}"]
    if not np.all(np.isfinite(maps.data)):
        out.append("maps finite: contains NaN/Inf")
        return out
    power = np.sum(np.abs(maps.data) ** 2, axis=0)
    err = np.abs(power[maps.support] - 1.0)
    if err.size and err.max() > tol:
        out.append(f"coil power normalization: max |sum|S|^2 - 1| = {err.max():.3g} on support")
    if np.any(maps.data[:, ~maps.support] != 0):
        out.append("maps zero outside support: nonzero coil values outside support")
    return out


def kspace_violations(ksp: MultiCoilKSpace) -> list[str]:
    out = []
    if not np.all(np.isfinite(ksp.data)):
        out.append("kspace finite: contains NaN/Inf")
    if not ksp.noise_sigma >= 0:
        out.append(f"noise sigma nonnegative: got {ksp.noise_sigma}")
    return out


def validate(problem: ReconProblem) -> list[str]:
    """List every violated invariant of `problem`; an empty list means valid."""
    out = mask_violations(problem.mask) + maps_violations(problem.maps) + kspace_violations(problem.kspace)
    shapes = {problem.mask.shape, problem.maps.shape, problem.kspace.shape}
    if len(shapes) != 1:
        out.append(f"shape agreement: mask {problem.mask.shape}, maps {problem.maps.shape}, "
                   f"kspace {problem.kspace.shape}")
        return out
    if problem.maps.num_coils != problem.kspace.num_coils:
        out.append(f"coil count agreement: maps {problem.maps.num_coils}, kspace {problem.kspace.num_coils}")
    if np.any(problem.kspace.data[:, ~problem.mask.values] != 0):
        out.append("kspace zero pattern: nonzero samples at unsampled locations")
    return out
