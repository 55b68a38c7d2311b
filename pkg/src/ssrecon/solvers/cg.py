"""Conjugate-gradient solvers: CG-SENSE and the regularised data-consistency step."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..core import ReconProblem
from ..forward_model import ForwardOperator
from ..networks import channels_to_complex, complex_to_channels


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class CgConfig:
    max_iters: int = 30
    tol: float = 1e-6

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be nonnegative, got {self.max_iters}")


@dataclass
class CgInfo:
    iterations: int = 0
    residuals: list = field(default_factory=list)  # ||b - H x_k|| for k = 0..iterations
    diverged: bool = False
    converged: bool = False


def _dot(a, b):
    return np.vdot(a, b).real


def conjugate_gradient(apply_h, b, x0=None, max_iters=30, tol=1e-6, divergence_window=5):
    """Solve ``H x = b`` for Hermitian positive (semi)definite `apply_h`.

    Stops when ``||b - H x|| <= tol * ||b||`` or after `max_iters`. A residual
    that grows for `divergence_window` consecutive iterations sets
    ``info.diverged`` and returns the last iterate.
    """
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=b.dtype)
    r = b - apply_h(x) if x0 is not None else b.copy()
    bnorm = np.sqrt(_dot(b, b))
    rs = _dot(r, r)
    info = CgInfo(residuals=[np.sqrt(rs)])
    if bnorm == 0 or np.sqrt(rs) <= tol * bnorm:
        info.converged = True
        return x, info
    p = r.copy()
    rising = 0
    for k in range(max_iters):
        hp = apply_h(p)
        denom = _dot(p, hp)
        if denom <= 0:
            break
        alpha = rs / denom
        x = x + alpha * p
        r = r - alpha * hp
        rs_new = _dot(r, r)
        info.iterations = k + 1
        info.residuals.append(np.sqrt(rs_new))
        rising = rising + 1 if info.residuals[-1] > info.residuals[-2] else 0
        if rising >= divergence_window:
            info.diverged = True
            warnings.warn(f"CG residual increased for {rising} consecutive iterations", ConvergenceWarning)
            break
        if np.sqrt(rs_new) <= tol * bnorm:
            info.converged = True
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, info


def cg_sense(problem: ReconProblem, cfg: CgConfig = CgConfig(), return_info=False):
    """Unregularised least squares ``min sum_i ||A_i x - y_i||^2`` by CG on the normal equations.

    Starts from zero; the iteration cap acts as the (only) regulariser.
    """
    op = ForwardOperator(problem.mask, problem.maps)
    rhs = op.adjoint(problem.kspace.data)
    x, info = conjugate_gradient(op.normal, rhs, None, cfg.max_iters, cfg.tol)
    return (x, info) if return_info else x


def dc_solve(x_hat, problem: ReconProblem, lam, tol=1e-6, max_iters=100, return_info=False):
    """``argmin_x ||A x - y||^2 + lam ||x - x_hat||^2`` via CG, warm-started at `x_hat`."""
    lam = float(lam)
    if not lam > 0:
        raise ValueError(f"lam must be positive, got {lam}")
    op = ForwardOperator(problem.mask, problem.maps)
    x_hat = np.asarray(x_hat, np.complex128)
    rhs = op.adjoint(problem.kspace.data) + lam * x_hat
    x, info = conjugate_gradient(lambda v: op.normal(v) + lam * v, rhs, x_hat, max_iters, tol)
    return (x, info) if return_info else x


def dc_layer(x_hat: ad.Tensor, problem: ReconProblem, lam: ad.Tensor, tol=1e-10, max_iters=200):
    """Differentiable :func:`dc_solve` on two-channel tensors.

    The backward pass uses the implicit-function relation of the converged
    solve: with ``H = A^H A + lam I`` and ``v = H^{-1} g``, the input gradient is
    ``lam v`` and the ``lam`` gradient is ``Re <v, x_hat - x>``.
    """
    op = ForwardOperator(problem.mask, problem.maps)
    lam_v = float(lam.data.reshape(()))
    xh = channels_to_complex(x_hat.data)
    x = dc_solve(xh, problem, lam_v, tol=tol, max_iters=max_iters)

    def backward(g):
        gc = channels_to_complex(g)
        v, _ = conjugate_gradient(lambda u: op.normal(u) + lam_v * u, gc, None, max_iters, tol)
        g_lam = np.array([_dot(v, xh - x)]).reshape(lam.shape)
        return complex_to_channels(lam_v * v), g_lam

    return ad.custom_op(complex_to_channels(x), (x_hat, lam), backward)
