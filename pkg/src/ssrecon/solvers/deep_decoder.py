"""Untrained-generator reconstruction: fit DeepDecoder weights to the measured k-space."""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..core import ReconProblem
from ..forward_model import ForwardOperator
from ..networks import DecoderArch, channels_to_complex, complex_to_channels, decoder_forward, init_decoder

DEFAULT_LR = 0.01


def kspace_sq_loss(out: ad.Tensor, op: ForwardOperator, y):
    """``sum_i ||A_i x - y_i||^2`` for a two-channel image tensor `out`."""
    r = op.forward(channels_to_complex(out.data)) - y
    loss = np.array([np.vdot(r, r).real])

    def backward(g):
        return (complex_to_channels(2.0 * g[0] * op.adjoint(r)),)

    return ad.custom_op(loss, (out,), backward)


def deep_decoder_fit(problem: ReconProblem, arch: DecoderArch, iters: int,
                     warm_start: ad.NetworkParams | None = None, lr: float = DEFAULT_LR,
                     beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """Adam on the generator weights; the Gaussian latent is fixed by ``arch.seed``.

    Adam at a fixed step size makes the loss spike now and then, so the
    weights with the lowest loss seen (including the final ones) are returned.
    ``params.meta["losses"]`` holds the loss at every iteration, evaluated
    before that iteration's update.
    """
    arch.check_image_size(problem.shape)
    fresh, z = init_decoder(arch)
    if warm_start is None:
        params = fresh
    else:
        warm_start.check(arch.fingerprint())
        params = warm_start.copy()
    params.meta = {"lr": lr, "beta1": beta1, "beta2": beta2, "eps": eps, "losses": []}
    op = ForwardOperator(problem.mask, problem.maps)
    y = problem.kspace.data
    z = ad.Tensor(z)
    state = ad.AdamState()
    losses = []
    best = (np.inf, None, None)
    for it in range(iters):
        with ad.recording() as tape:
            out = decoder_forward(params, arch, z)
            loss = kspace_sq_loss(out, op, y)
        value = float(loss.data[0])
        if not np.isfinite(value):
            raise FloatingPointError(f"deep decoder loss became {value} at iteration {it}")
        losses.append(value)
        if value < best[0]:
            best = (value, params, out.data)
        ad.backward(tape, loss)
        params, state = ad.adam_step(params, ad.param_grads(params), state, lr, beta1, beta2, eps)
    out = decoder_forward(params, arch, z)
    value = float(kspace_sq_loss(out, op, y).data[0])
    if value < best[0]:
        best = (value, params, out.data)
    best_loss, params, out = best
    params.meta = dict(params.meta, losses=losses, final_loss=best_loss)
    return channels_to_complex(out), params
