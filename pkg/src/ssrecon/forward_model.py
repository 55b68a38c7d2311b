"""Multi-coil Cartesian measurement operator ``A_i = M F S_i`` and its adjoint."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MultiCoilKSpace, SamplingMask, SensitivityMaps, acs_slices

SUPPORT_THRESHOLD = 0.05


def fft2c(x):
    """Orthonormal 2D DFT over the last two axes with DC at the grid centre."""
    x = np.fft.ifftshift(x, axes=(-2, -1))
    x = np.fft.fft2(x, axes=(-2, -1), norm="ortho")
    return np.fft.fftshift(x, axes=(-2, -1))


def ifft2c(k):
    """Inverse of :func:`fft2c`."""
    k = np.fft.ifftshift(k, axes=(-2, -1))
    k = np.fft.ifft2(k, axes=(-2, -1), norm="ortho")
    return np.fft.fftshift(k, axes=(-2, -1))


@dataclass(frozen=True)
class ForwardOperator:
    mask: SamplingMask
    maps: SensitivityMaps

    def __post_init__(self):
        if self.mask.shape != self.maps.shape:
            raise ValueError(f"mask shape {self.mask.shape} does not match maps {self.maps.shape}")

    @property
    def shape(self):
        return self.mask.shape

    def _check_image(self, x):
        if x.shape[-2:] != self.shape:
            raise ValueError(f"image shape {x.shape} does not match operator {self.shape}")

    def forward(self, x):
        """Coil k-space ``mask * F(S_i x)``; accepts leading batch axes on `x`."""
        self._check_image(x)
        coil_images = self.maps.data * x[..., None, :, :]
        return fft2c(coil_images) * self.mask.values

    def adjoint(self, y):
        """``sum_i conj(S_i) F^H(mask * y_i)``; coil axis is ``-3``."""
        y = np.asarray(y)
        if y.shape[-3:] != self.maps.data.shape:
            raise ValueError(f"k-space shape {y.shape} does not match maps {self.maps.data.shape}")
        coil_images = ifft2c(y * self.mask.values)
        return np.sum(np.conj(self.maps.data) * coil_images, axis=-3)

    def normal(self, x):
        return self.adjoint(self.forward(x))


def apply_forward(op: ForwardOperator, x) -> MultiCoilKSpace:
    """Noiseless measurement of image `x`."""
    return MultiCoilKSpace(op.forward(np.asarray(x, np.complex128)), 0.0)


def apply_adjoint(op: ForwardOperator, y) -> np.ndarray:
    data = y.data if isinstance(y, MultiCoilKSpace) else y
    return op.adjoint(np.asarray(data, np.complex128))


def _hann(n):
    # symmetric window without the zero end points
    k = np.arange(n)
    return 0.5 - 0.5 * np.cos(2 * np.pi * (k + 1) / (n + 1))


def estimate_sensitivities(ksp: MultiCoilKSpace, acs, threshold: float = SUPPORT_THRESHOLD) -> SensitivityMaps:
    """Low-resolution coil maps from the fully sampled calibration block.

    Each coil's ACS block is Hann-apodised, zero-filled and inverse transformed;
    the coil images are divided by their root-sum-of-squares. Pixels whose RSS
    falls below ``threshold * max(RSS)`` are outside the support.
    """
    hy, hx = int(acs[0]), int(acs[1])
    if hy <= 0 or hx <= 0:
        raise ValueError(f"empty ACS block {acs}")
    data = np.asarray(ksp.data)
    sy, sx = acs_slices(data.shape[-2:], (hy, hx))
    window = np.outer(_hann(2 * hy), _hann(2 * hx))
    calib = np.zeros_like(data)
    calib[:, sy, sx] = data[:, sy, sx] * window
    low = ifft2c(calib)
    rss = np.sqrt(np.sum(np.abs(low) ** 2, axis=0))
    peak = rss.max()
    if not peak > 0:
        raise ValueError("degenerate ACS: root-sum-of-squares is zero everywhere")
    support = rss > threshold * peak
    maps = np.zeros_like(low)
    maps[:, support] = low[:, support] / rss[support]
    return SensitivityMaps(maps, support)
