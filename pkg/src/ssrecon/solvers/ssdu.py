"""Self-supervised unrolled reconstruction trained on disjoint k-space splits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..core import ReconProblem, SamplingMask
from ..forward_model import ForwardOperator
from ..networks import UNetArch, channels_to_complex, complex_to_channels, init_unet, unet_forward
from .cg import dc_layer

LAMBDA_KEY = "dc.lambda"


@dataclass(frozen=True)
class SsduConfig:
    unrolls: int = 5
    dc_lambda_init: float = 0.05
    split_theta_fraction: float = 0.6
    epochs: int = 10
    learning_rate: float = 0.5e-4
    denoiser: UNetArch = field(default_factory=UNetArch)
    identity_denoiser: bool = False  # freeze the denoiser at the identity (DC-only unrolling)
    dc_tol: float = 1e-10
    dc_max_iters: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not 0 < self.split_theta_fraction < 1:
            raise ValueError(f"split fraction must lie in (0, 1), got {self.split_theta_fraction}")
        if self.unrolls < 0 or self.epochs < 0:
            raise ValueError("unrolls and epochs must be nonnegative")
        if not self.dc_lambda_init > 0:
            raise ValueError("dc_lambda_init must be positive")

    def fingerprint(self):
        arch = "identity" if self.identity_denoiser else self.denoiser.fingerprint()
        return ad.arch_fingerprint({"model": "ssdu", "denoiser": arch})


@dataclass(frozen=True)
class SplitPair:
    theta: SamplingMask
    lam: SamplingMask


def ssdu_split(mask: SamplingMask, fraction: float, seed) -> SplitPair:
    """Send each sampled location to the input set with probability `fraction`, else to the loss set.

    ACS locations are treated like any other sample. An empty side is redrawn
    once before giving up.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    for _ in range(2):
        draw = rng.random(mask.shape) < fraction
        theta = mask.values & draw
        lam = mask.values & ~draw
        if theta.any() and lam.any():
            return SplitPair(SamplingMask(theta), SamplingMask(lam))
    raise ValueError(f"degenerate split of a mask with {mask.num_sampled} samples")


def init_ssdu(cfg: SsduConfig, seed=0) -> ad.NetworkParams:
    tensors = [] if cfg.identity_denoiser else list(init_unet(cfg.denoiser, seed))
    tensors.append((LAMBDA_KEY, np.array([cfg.dc_lambda_init])))
    return ad.NetworkParams(tensors, cfg.fingerprint())


def ssdu_unroll(params, problem: ReconProblem, cfg: SsduConfig) -> ad.Tensor:
    """Adjoint start, then `unrolls` rounds of denoise + data consistency."""
    if not cfg.identity_denoiser:
        cfg.denoiser.check_image_size(problem.shape)
    op = ForwardOperator(problem.mask, problem.maps)
    x = ad.Tensor(complex_to_channels(op.adjoint(problem.kspace.data)))
    lam = params[LAMBDA_KEY]
    for _ in range(cfg.unrolls):
        x_hat = x if cfg.identity_denoiser else unet_forward(params, cfg.denoiser, x)
        x = dc_layer(x_hat, problem, lam, cfg.dc_tol, cfg.dc_max_iters)
    return x


def ssdu_infer(params, problem: ReconProblem, cfg: SsduConfig = SsduConfig()) -> np.ndarray:
    """Reconstruct from all acquired samples with trained `params`."""
    params.check(cfg.fingerprint())
    return channels_to_complex(ssdu_unroll(params, problem, cfg).data)


def split_loss(x: ad.Tensor, op_lam: ForwardOperator, y_lam):
    """``L1/||y||_1 + L2/||y||_2`` on the held-out k-space, each term weighted 1/2."""
    r = op_lam.forward(channels_to_complex(x.data)) - y_lam
    n1 = np.abs(y_lam).sum()
    n2 = np.sqrt(np.vdot(y_lam, y_lam).real)
    mag = np.abs(r)
    l1 = mag.sum()
    l2 = np.sqrt(np.vdot(r, r).real)
    value = np.array([0.5 * l1 / n1 + 0.5 * l2 / n2])

    def backward(g):
        unit = np.where(mag > 0, r / np.where(mag > 0, mag, 1.0), 0.0)
        dr = 0.5 * unit / n1 + (0.5 * r / (l2 * n2) if l2 > 0 else 0.0)
        return (complex_to_channels(g[0] * op_lam.adjoint(dr)),)

    return ad.custom_op(value, (x,), backward)


def ssdu_loss(params, problem: ReconProblem, split: SplitPair, cfg: SsduConfig, grad=True):
    """Loss of one split (and parameter gradients when `grad`)."""
    op_lam = ForwardOperator(split.lam, problem.maps)
    y_lam = problem.kspace.data * split.lam.values
    with ad.recording() as tape:
        x = ssdu_unroll(params, problem.restricted(split.theta), cfg)
        loss = split_loss(x, op_lam, y_lam)
    value = float(loss.data[0])
    if not np.isfinite(value):
        raise FloatingPointError(f"SSDU loss became {value}")
    if not grad:
        return value, None
    ad.backward(tape, loss)
    return value, ad.param_grads(params)


def ssdu_train(dataset, cfg: SsduConfig = SsduConfig(), seed=0, params=None) -> ad.NetworkParams:
    """Train the shared denoiser and the DC weight on undersampled data only.

    Every step draws a fresh split of the example's mask. The mean loss per
    epoch is stored in ``params.meta["epoch_losses"]``.
    """
    if not dataset:
        raise ValueError("empty training set")
    rng = np.random.default_rng(seed)
    if params is None:
        params = init_ssdu(cfg, seed)
    params.check(cfg.fingerprint())
    state = ad.AdamState()
    epoch_losses = []
    for _ in range(cfg.epochs):
        losses = []
        for i in rng.permutation(len(dataset)):
            problem = dataset[i]
            split = ssdu_split(problem.mask, cfg.split_theta_fraction, rng)
            value, grads = ssdu_loss(params, problem, split, cfg)
            losses.append(value)
            params, state = ad.adam_step(params, grads, state, cfg.learning_rate,
                                         cfg.beta1, cfg.beta2, cfg.eps)
        epoch_losses.append(float(np.mean(losses)))
    params.meta = {"epoch_losses": epoch_losses, "lr": cfg.learning_rate, "beta1": cfg.beta1,
                   "beta2": cfg.beta2, "eps": cfg.eps, "seed": seed}
    return params
