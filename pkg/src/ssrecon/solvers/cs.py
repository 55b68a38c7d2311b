"""L1-wavelet compressed sensing by monotone FISTA."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ReconProblem
from ..forward_model import ForwardOperator
from .wavelet import detail_mask, wavelet_forward, wavelet_inverse

DEFAULT_LAMBDA = 2.3e-4


@dataclass(frozen=True)
class CsConfig:
    lam: float = DEFAULT_LAMBDA
    max_iters: int = 200
    wavelet_levels: int = 3
    step: float = 1.0
    wavelet: str = "db4"

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")


def soft_threshold(v, t):
    """Complex shrinkage ``v * max(|v| - t, 0) / |v|`` (zero where v is zero)."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(v)
    mag = np.abs(v)
    scale = np.maximum(mag - t, 0.0) / np.where(mag > 0, mag, 1.0)
    return v * scale


def cs_objective(op, y, x, cfg: CsConfig):
    r = op.forward(x) - y
    c = wavelet_forward(x, cfg.wavelet_levels, cfg.wavelet)
    det = detail_mask(c.shape, cfg.wavelet_levels)
    return 0.5 * np.vdot(r, r).real + cfg.lam * np.abs(c[..., det]).sum()


def cs_l1wavelet(problem: ReconProblem, cfg: CsConfig = CsConfig(), history=None):
    """Minimise ``1/2 sum_i ||A_i x - y_i||^2 + lam ||W_d x||_1`` from the adjoint image.

    ``W_d`` keeps the detail bands of the wavelet transform; the coarse band is
    unpenalised. The monotone FISTA variant only accepts a proximal step when it
    does not raise the objective, so the objective sequence never increases.
    If `history` is a list, the objective after every iteration is appended.
    """
    op = ForwardOperator(problem.mask, problem.maps)
    y = problem.kspace.data
    aty = op.adjoint(y)
    levels, wav = cfg.wavelet_levels, cfg.wavelet
    det = detail_mask(aty.shape, levels)
    thresh = cfg.step * cfg.lam

    def prox(v):
        c = wavelet_forward(v, levels, wav)
        c[det] = soft_threshold(c[det], thresh)
        return wavelet_inverse(c, levels, wav)

    x = aty.copy()
    fx = cs_objective(op, y, x, cfg)
    z, t = x.copy(), 1.0
    for _ in range(cfg.max_iters):
        u = prox(z - cfg.step * (op.normal(z) - aty))
        fu = cs_objective(op, y, u, cfg)
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        if fu <= fx:
            x_next, f_next = u, fu
        else:
            x_next, f_next = x, fx
        z = x_next + (t / t_next) * (u - x_next) + ((t - 1) / t_next) * (x_next - x)
        x, fx, t = x_next, f_next, t_next
        if history is not None:
            history.append(fx)
    return x
