"""Full-reference image quality: PSNR, SSIM and a random-feature perceptual distance."""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve2d

from ..autodiff import avgpool2x_array, conv2d_array


def _pair(x, ref):
    x = np.abs(np.asarray(x)).astype(float)
    ref = np.abs(np.asarray(ref)).astype(float)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {ref.shape}")
    return x, ref


def center_crop(img, size):
    """Central ``size`` (int or (h, w)) window of the last two axes."""
    if size is None:
        return img
    h, w = (size, size) if np.isscalar(size) else size
    H, W = img.shape[-2:]
    if h > H or w > W:
        raise ValueError(f"crop {h}x{w} larger than image {H}x{W}")
    top, left = (H - h) // 2, (W - w) // 2
    return img[..., top:top + h, left:left + w]


def psnr(x, ref):
    """``20 log10(max(ref) / rmse)`` in dB; identical images give ``inf``."""
    x, ref = _pair(x, ref)
    peak = ref.max()
    if peak <= 0:
        raise ValueError("reference is identically zero")
    mse = np.mean((x - ref) ** 2)
    if mse == 0:
        return float("inf")
    return float(20 * np.log10(peak / np.sqrt(mse)))


def gaussian_window(size=11, sigma=1.5):
    g = np.exp(-((np.arange(size) - (size - 1) / 2) ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(x, ref, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """Mean SSIM over all fully contained Gaussian windows.

    The dynamic range L is ``max(ref) - min(ref)`` (1 if the reference is constant).
    """
    x, ref = _pair(x, ref)
    if min(x.shape) < window:
        raise ValueError(f"image {x.shape} smaller than the {window}x{window} window")
    L = ref.max() - ref.min()
    L = L if L > 0 else 1.0
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    w = gaussian_window(window, sigma)

    def filt(a):
        return convolve2d(a, w, mode="valid")

    mx, mr = filt(x), filt(ref)
    sxx = filt(x * x) - mx * mx
    srr = filt(ref * ref) - mr * mr
    sxr = filt(x * ref) - mx * mr
    num = (2 * mx * mr + c1) * (2 * sxr + c2)
    den = (mx * mx + mr * mr + c1) * (sxx + srr + c2)
    return float(np.mean(num / den))


class FeatureExtractor:
    """Frozen random conv pyramid: per stage a 3x3 conv, ReLU and 2x average pooling."""

    def __init__(self, seed=0, widths=(8, 16, 32)):
        self.seed = int(seed)
        self.widths = tuple(int(c) for c in widths)
        rng = np.random.default_rng(self.seed)
        self.weights = []
        cin = 1
        for c in self.widths:
            w = rng.standard_normal((c, cin, 3, 3)) * np.sqrt(2.0 / (9 * cin))
            w.setflags(write=False)
            self.weights.append(w)
            cin = c

    def features(self, img):
        h = np.asarray(img, float)[None]
        if min(h.shape[1:]) < 2 ** len(self.weights):
            raise ValueError(f"image {h.shape[1:]} too small for {len(self.weights)} pooling stages")
        out = []
        for w in self.weights:
            h = np.maximum(conv2d_array(h, w), 0.0)
            h = avgpool2x_array(h[:, :h.shape[1] // 2 * 2, :h.shape[2] // 2 * 2])  # drop an odd edge
            out.append(h)
        return out


_DEFAULT_EXTRACTOR = None


def default_extractor():
    global _DEFAULT_EXTRACTOR
    if _DEFAULT_EXTRACTOR is None:
        _DEFAULT_EXTRACTOR = FeatureExtractor()
    return _DEFAULT_EXTRACTOR


def perc_dis(x, ref, extractor: FeatureExtractor | None = None):
    """Sum over stages of the mean absolute feature difference.

    Both images are divided by their joint maximum so that they share one
    intensity scale in [0, 1]; this keeps the distance symmetric.
    """
    x, ref = _pair(x, ref)
    extractor = extractor or default_extractor()
    peak = max(x.max(), ref.max())
    if peak > 0:
        x, ref = x / peak, ref / peak
    fx, fr = extractor.features(x), extractor.features(ref)
    return float(sum(np.mean(np.abs(a - b)) for a, b in zip(fx, fr)))
