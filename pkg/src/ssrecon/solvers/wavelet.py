"""Orthogonal periodised 2D discrete wavelet transform.

Coefficients are kept in the usual in-place pyramid layout: after ``levels``
stages the top-left ``(H >> levels, W >> levels)`` block holds the
approximation band and everything else is detail.
"""

from functools import lru_cache
from math import comb

import numpy as np


def daubechies(p):
    """Decomposition low-pass filter with `p` vanishing moments (length 2p).

    Spectral factorisation of the Daubechies half-band polynomial, picking
    the minimum-phase roots.
    """
    poly = [comb(p - 1 + k, k) for k in range(p)][::-1]
    q = np.poly1d([1.0])
    for y in np.roots(poly) if p > 1 else []:
        part = 2 * np.sqrt(y * (y - 1))
        z = 1 - 2 * y + part
        if abs(z) < 1:
            z = 1 - 2 * y - part
        q = q * np.poly1d([1, -z])
    q = np.poly1d([1.0, 1.0]) ** p * np.real(q)
    h = q.c / np.sum(q.c) * np.sqrt(2)
    return h.astype(np.float64)


FILTERS = {"haar": daubechies(1), "db2": daubechies(2), "db4": daubechies(4)}


def highpass(h):
    n = np.arange(len(h))
    return (-1.0) ** n * h[::-1]


@lru_cache(maxsize=None)
def analysis_matrix(n, wavelet="db4"):
    """One-level periodised analysis ``[low; high]`` as an orthogonal n×n matrix."""
    if n % 2:
        raise ValueError(f"length {n} is odd")
    h = FILTERS[wavelet]
    g = highpass(h)
    m = np.zeros((n, n))
    for k in range(n // 2):
        for i in range(len(h)):
            j = (2 * k + i) % n
            m[k, j] += h[i]
            m[n // 2 + k, j] += g[i]
    m.setflags(write=False)
    return m


def _check(shape, levels):
    h, w = shape[-2:]
    f = 2 ** levels
    if levels < 0 or h % f or w % f:
        raise ValueError(f"image {h}x{w} is not divisible by 2**{levels}")


def wavelet_forward(x, levels=3, wavelet="db4"):
    x = np.asarray(x)
    _check(x.shape, levels)
    c = np.array(x, dtype=np.result_type(x.dtype, np.float64), copy=True)
    h, w = c.shape[-2:]
    for _ in range(levels):
        mh, mw = analysis_matrix(h, wavelet), analysis_matrix(w, wavelet)
        c[..., :h, :w] = mh @ c[..., :h, :w] @ mw.T
        h, w = h // 2, w // 2
    return c


def wavelet_inverse(c, levels=3, wavelet="db4"):
    c = np.asarray(c)
    _check(c.shape, levels)
    x = np.array(c, dtype=np.result_type(c.dtype, np.float64), copy=True)
    h0, w0 = x.shape[-2:]
    for lev in reversed(range(levels)):
        h, w = h0 >> lev, w0 >> lev
        mh, mw = analysis_matrix(h, wavelet), analysis_matrix(w, wavelet)
        x[..., :h, :w] = mh.T @ x[..., :h, :w] @ mw
    return x


def detail_mask(shape, levels):
    """True on detail coefficients, False on the coarse approximation band."""
    m = np.ones(shape[-2:], dtype=bool)
    m[: shape[-2] >> levels, : shape[-1] >> levels] = False
    return m
