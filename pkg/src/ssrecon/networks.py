"""Network definitions on top of :mod:`ssrecon.autodiff`.

Two models are used by the solvers:

* an untrained DeepDecoder-style generator (1x1 convolutions, bilinear
  upsampling, ReLU, channel normalisation) mapping a fixed Gaussian latent to
  a two-channel (real, imaginary) image;
* a small U-Net with additive skips, used residually as the SSDU denoiser.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad


def complex_to_channels(x):
    return np.stack([x.real, x.imag])


def channels_to_complex(c):
    return c[0] + 1j * c[1]


@dataclass(frozen=True)
class DecoderArch:
    """Generator shape: ``num_layers`` blocks of ``channels`` width.

    By default each block doubles the spatial size, so ``input_size * 2**num_layers``
    must equal the image size. When ``output_size`` is given the block sizes are
    spaced geometrically between the two instead.
    """

    num_layers: int = 4
    channels: int = 64
    input_size: tuple = (8, 8)
    seed: int = 0
    output_size: tuple | None = None

    def __post_init__(self):
        if self.num_layers < 1 or self.channels < 1:
            raise ValueError("num_layers and channels must be positive")
        object.__setattr__(self, "input_size", tuple(int(s) for s in self.input_size))
        if self.output_size is not None:
            object.__setattr__(self, "output_size", tuple(int(s) for s in self.output_size))

    def layer_sizes(self):
        h, w = self.input_size
        if self.output_size is None:
            return [(h * 2 ** (i + 1), w * 2 ** (i + 1)) for i in range(self.num_layers)]
        oh, ow = self.output_size
        sizes = []
        for i in range(1, self.num_layers + 1):
            f = i / self.num_layers
            sizes.append((int(round(h * (oh / h) ** f)), int(round(w * (ow / w) ** f))))
        return sizes

    @property
    def image_size(self):
        return self.layer_sizes()[-1]

    def check_image_size(self, shape):
        if tuple(shape) != self.image_size:
            raise ValueError(f"decoder produces {self.image_size}, problem needs {tuple(shape)}")

    def fingerprint(self):
        spec = asdict(self)
        spec.pop("seed")
        return ad.arch_fingerprint({"model": "deep_decoder", **spec})


def decoder_for(shape, num_layers=4, channels=64, seed=0) -> DecoderArch:
    """Desk-scale ×2-per-layer generator for an image of `shape`."""
    h, w = shape
    f = 2 ** num_layers
    if h % f or w % f:
        raise ValueError(f"image {shape} is not divisible by 2**{num_layers}")
    return DecoderArch(num_layers, channels, (h // f, w // f), seed)


# A depth/width pair of 300 and 10 on a (10, 10) latent is ambiguous, so both
# readings are kept. They resample geometrically to the image size.
DECODER_PRESETS = {
    "desk": dict(num_layers=4, channels=64),
    "wide_300ch_10layers": dict(num_layers=10, channels=300, input_size=(10, 10)),
    "deep_10ch_300layers": dict(num_layers=300, channels=10, input_size=(10, 10)),
}


def decoder_preset(name, shape, seed=0) -> DecoderArch:
    kw = dict(DECODER_PRESETS[name])
    if name == "desk":
        return decoder_for(shape, seed=seed, **kw)
    return DecoderArch(seed=seed, output_size=tuple(shape), **kw)


def init_decoder(arch: DecoderArch):
    """Fresh parameters and the fixed latent input for `arch`."""
    rng = np.random.default_rng(arch.seed)
    c = arch.channels
    z = rng.standard_normal((c, *arch.input_size))
    tensors = []
    for i in range(arch.num_layers):
        tensors.append((f"layer{i}.w", rng.standard_normal((c, c, 1, 1)) / np.sqrt(c)))
        tensors.append((f"layer{i}.gamma", np.ones(c)))
        tensors.append((f"layer{i}.beta", np.zeros(c)))
    tensors.append(("out.w", rng.standard_normal((2, c, 1, 1)) / np.sqrt(c)))
    return ad.NetworkParams(tensors, arch.fingerprint()), z


def latent_for(arch: DecoderArch):
    return init_decoder(arch)[1]


def decoder_forward(params, arch: DecoderArch, z):
    h = z if isinstance(z, ad.Tensor) else ad.Tensor(z)
    for i, size in enumerate(arch.layer_sizes()):
        h = ad.conv2d(h, params[f"layer{i}.w"])
        h = ad.resize(h, size)
        h = ad.relu(h)
        h = ad.channel_norm(h, params[f"layer{i}.gamma"], params[f"layer{i}.beta"])
    return ad.conv2d(h, params["out.w"])


@dataclass(frozen=True)
class UNetArch:
    """Encoder-decoder denoiser: ``depth`` pooling stages, channels doubling from ``base_channels``."""

    depth: int = 4
    base_channels: int = 12
    in_channels: int = 2
    out_init_scale: float = 1e-3

    def channels(self, level):
        return self.base_channels * 2 ** level

    def fingerprint(self):
        return ad.arch_fingerprint({"model": "unet", **asdict(self)})

    def check_image_size(self, shape):
        f = 2 ** self.depth
        if shape[0] % f or shape[1] % f:
            raise ValueError(f"image {tuple(shape)} is not divisible by 2**{self.depth}")


def _he(rng, co, ci, k):
    return rng.standard_normal((co, ci, k, k)) * np.sqrt(2.0 / (ci * k * k))


def init_unet(arch: UNetArch, seed=0):
    rng = np.random.default_rng(seed)
    tensors = []
    c_prev = arch.in_channels
    for d in range(arch.depth + 1):
        c = arch.channels(d)
        tensors += [(f"enc{d}.w1", _he(rng, c, c_prev, 3)), (f"enc{d}.b1", np.zeros(c)),
                    (f"enc{d}.w2", _he(rng, c, c, 3)), (f"enc{d}.b2", np.zeros(c))]
        c_prev = c
    for d in reversed(range(arch.depth)):
        c = arch.channels(d)
        tensors += [(f"up{d}.w", _he(rng, c, arch.channels(d + 1), 1)),
                    (f"dec{d}.w1", _he(rng, c, c, 3)), (f"dec{d}.b1", np.zeros(c)),
                    (f"dec{d}.w2", _he(rng, c, c, 3)), (f"dec{d}.b2", np.zeros(c))]
    # near-zero head: the residual denoiser starts close to the identity
    tensors += [("out.w", rng.standard_normal((arch.in_channels, arch.channels(0), 1, 1)) * arch.out_init_scale),
                ("out.b", np.zeros(arch.in_channels))]
    return ad.NetworkParams(tensors, arch.fingerprint())


def unet_forward(params, arch: UNetArch, x):
    """Residual denoiser ``x + U(x)`` on a ``(2, H, W)`` tensor."""
    skips = []
    h = x
    for d in range(arch.depth + 1):
        if d > 0:
            h = ad.avgpool2x(h)
        h = ad.relu(ad.conv2d(h, params[f"enc{d}.w1"], params[f"enc{d}.b1"]))
        h = ad.relu(ad.conv2d(h, params[f"enc{d}.w2"], params[f"enc{d}.b2"]))
        skips.append(h)
    for d in reversed(range(arch.depth)):
        h = ad.conv2d(ad.upsample2x(h), params[f"up{d}.w"])
        h = ad.add(h, skips[d])
        h = ad.relu(ad.conv2d(h, params[f"dec{d}.w1"], params[f"dec{d}.b1"]))
        h = ad.relu(ad.conv2d(h, params[f"dec{d}.w2"], params[f"dec{d}.b2"]))
    return ad.add(x, ad.conv2d(h, params["out.w"], params["out.b"]))
