"""No-reference quality scores: the JPEG blockiness/activity model and PIQE.

Both expect 8-bit style intensities, so images are first mapped linearly onto
[0, 255] using their own min and max.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate

# Wang, Sheikh & Bovik (2002) fitted constants
NRJPEG_ALPHA = -245.9
NRJPEG_BETA = 261.9
NRJPEG_GAMMA = (-0.0240, 0.0160, 0.0064)

PIQE_BLOCK = 16
PIQE_ACTIVITY = 0.1
PIQE_SEGMENT = 6
PIQE_SEGMENT_STD = 0.1
PIQE_C = 1.0


def to_8bit_range(x):
    x = np.abs(np.asarray(x)).astype(float)
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return 255.0 * ((x - lo) / (hi - lo))  # ratio first: hi - lo may be subnormal


def _blockiness_features(d, n):
    """B, A, Z along the last axis for first differences `d` of an image of width `n`."""
    m = d.shape[0]
    bnd = d[:, 7:8 * (n // 8 - 1):8]  # differences straddling the 8-pixel block edges
    B = np.abs(bnd).mean() if bnd.size else 0.0
    A = (8 * np.abs(d).mean() - B) / 7
    s = np.sign(d)
    Z = np.mean(s[:, :-1] * s[:, 1:] < 0) if m and d.shape[1] > 1 else 0.0
    return B, A, Z


def nrjpeg_features(x):
    img = to_8bit_range(x)
    h, w = img.shape
    bh, ah, zh = _blockiness_features(np.diff(img, axis=1), w)
    bv, av, zv = _blockiness_features(np.diff(img, axis=0).T, h)
    return (bh + bv) / 2, (ah + av) / 2, (zh + zv) / 2


def nrjpeg(x):
    """``alpha + beta B^g1 A^g2 Z^g3``; higher is better.

    With no activity or no zero crossings the product vanishes and the score is
    ``alpha`` (a constant image lands there). A zero blockiness term is floored
    at 1e-12 to keep the score finite.
    """
    x = np.asarray(x)
    if x.ndim != 2 or min(x.shape) < 16:
        raise ValueError(f"image must be 2D and at least 16x16, got {x.shape}")
    B, A, Z = nrjpeg_features(x)
    if A <= 0 or Z <= 0:
        return NRJPEG_ALPHA
    g1, g2, g3 = NRJPEG_GAMMA
    return float(NRJPEG_ALPHA + NRJPEG_BETA * max(B, 1e-12) ** g1 * A ** g2 * Z ** g3)


def _gaussian7():
    k = np.arange(7) - 3
    g = np.exp(-k ** 2 / (2 * (7 / 6) ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def mscn(img, c=PIQE_C):
    w = _gaussian7()
    mu = correlate(img, w, mode="nearest")
    var = correlate(img * img, w, mode="nearest") - mu * mu
    return (img - mu) / (np.sqrt(np.maximum(var, 0.0)) + c)


def _edge_artifact(block):
    """True if any 6-pixel segment of a block edge is flat in an active block."""
    edges = (block[0], block[-1], block[:, 0], block[:, -1])
    n = len(edges[0]) - PIQE_SEGMENT + 1
    for e in edges:
        for k in range(n):
            if e[k:k + PIQE_SEGMENT].std() < PIQE_SEGMENT_STD:
                return True
    return False


def _noisy(block):
    """Centre/surround test on the two central columns versus the rest.

    With ``r = std(surround) / std(centre)`` and block std ``s``, the block is
    noisy when ``s > 2 |s - r| / max(s, r)``.
    """
    c = block.shape[1] // 2
    centre = block[:, c - 1:c + 1]
    surround = np.concatenate([block[:, :c - 1], block[:, c + 1:]], axis=1)
    sc = centre.std()
    r = surround.std() / sc if sc > 0 else 0.0
    s = block.std()
    top = max(s, r)
    beta = abs(s - r) / top if top > 0 else 0.0
    return s > 2 * beta


def piqe(x, return_maps=False):
    """Block-wise distortion score in [0, 100]; lower is better.

    Active 16x16 blocks (MSCN variance above 0.1) are scored 1 if they show both
    a flat edge segment and noise, ``1 - v`` for an edge artifact alone and
    ``v`` for noise alone, with the block variance ``v`` clipped to [0, 1].
    The score is ``100 (sum + 1) / (n_active + 1)``.
    """
    x = np.asarray(x)
    if x.ndim != 2 or min(x.shape) < 64:
        raise ValueError(f"image must be 2D and at least 64x64, got {x.shape}")
    coef = mscn(to_8bit_range(x))
    nb_r, nb_c = x.shape[0] // PIQE_BLOCK, x.shape[1] // PIQE_BLOCK
    total, active = 0.0, 0
    dist = np.zeros((nb_r, nb_c))
    for i in range(nb_r):
        for j in range(nb_c):
            blk = coef[i * PIQE_BLOCK:(i + 1) * PIQE_BLOCK, j * PIQE_BLOCK:(j + 1) * PIQE_BLOCK]
            v = blk.var()
            if v <= PIQE_ACTIVITY:
                continue
            active += 1
            v = min(v, 1.0)
            art, noise = _edge_artifact(blk), _noisy(blk)
            d = 1.0 if art and noise else (1 - v) if art else v if noise else 0.0
            dist[i, j] = d
            total += d
    score = float(100 * (total + PIQE_C) / (active + PIQE_C))
    return (score, dist) if return_maps else score
