"""Minimal define-by-run reverse-mode differentiation for small CNNs.

Activations are real ``(C, H, W)`` float64 arrays (batch size one); complex
images travel as two channels. Ops record onto the innermost active
:class:`Tape`; :func:`backward` walks it in reverse.

No broadcasting is done apart from the per-channel affine of
:func:`channel_norm` and the per-channel conv bias.
"""

from __future__ import annotations

import hashlib
import json
import threading
from collections import OrderedDict
from contextlib import contextmanager
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class Node:
    out: Tensor
    inputs: tuple
    backward: object  # g_out -> tuple of input grads (None where not needed)


@dataclass
class Tape:
    nodes: list = field(default_factory=list)

    def record(self, out, inputs, backward):
        self.nodes.append(Node(out, tuple(inputs), backward))

    def __len__(self):
        return len(self.nodes)


_state = threading.local()


def _tape_stack():
    if not hasattr(_state, "stack"):
        _state.stack = []
    return _state.stack


@contextmanager
def recording():
    """Record ops issued inside the block onto a fresh tape."""
    tape = Tape()
    _tape_stack().append(tape)
    try:
        yield tape
    finally:
        _tape_stack().pop()


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


def custom_op(data, inputs, backward):
    """Wrap `data` as the output of an op over `inputs`.

    `backward` maps the output gradient to one gradient per input (``None``
    allowed for inputs that do not require grad). Used for ops whose
    derivative is defined outside this module (e.g. data-consistency solves).
    """
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    tape = active_tape()
    if needs and tape is not None:
        tape.record(out, inputs, backward)
    return out


def _check_same(a, b, what):
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


# ---
# elementwise and scalar ops

def add(a, b):
    _check_same(a, b, "add")
    return custom_op(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b):
    _check_same(a, b, "sub")
    return custom_op(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b):
    _check_same(a, b, "mul")
    return custom_op(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(x, c):
    """Multiply by a constant float or by a one-element Tensor."""
    if isinstance(c, Tensor):
        if c.data.size != 1:
            raise ValueError(f"scale: expected a scalar tensor, got shape {c.shape}")
        s = c.data.reshape(())
        return custom_op(x.data * s, (x, c),
                         lambda g: (g * s, np.reshape(np.sum(g * x.data), c.shape)))
    c = float(c)
    return custom_op(x.data * c, (x,), lambda g: (g * c,))


def square(x):
    return custom_op(x.data ** 2, (x,), lambda g: (2.0 * x.data * g,))


def relu(x):
    on = x.data > 0
    return custom_op(np.where(on, x.data, 0.0), (x,), lambda g: (g * on,))


def tensor_sum(x):
    return custom_op(np.sum(x.data).reshape(1), (x,), lambda g: (np.full(x.shape, g.reshape(())),))


# ---
# convolution and resampling

def _im2col(x, k):
    c, h, w = x.shape
    if k == 1:
        return x.reshape(c, h * w)
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))  # (c, h, w, k, k)
    return win.transpose(0, 3, 4, 1, 2).reshape(c * k * k, h * w)


def _col2im(cols, shape, k):
    c, h, w = shape
    if k == 1:
        return cols.reshape(c, h, w)
    p = k // 2
    cols = cols.reshape(c, k, k, h, w)
    out = np.zeros((c, h + 2 * p, w + 2 * p))
    for i in range(k):
        for j in range(k):
            out[:, i:i + h, j:j + w] += cols[:, i, j]
    return out[:, p:p + h, p:p + w]


def conv2d_array(x, w, b=None):
    """Plain-array stride-1, zero-padded 'same' convolution (cross-correlation)."""
    co, ci, k, _ = w.shape
    _, h, wd = x.shape
    out = w.reshape(co, -1) @ _im2col(x, k)
    if b is not None:
        out += b[:, None]
    return out.reshape(co, h, wd)


def conv2d(x, w, b=None):
    """Cross-correlation with a ``(Co, Ci, k, k)`` kernel, k in {1, 3}."""
    if x.data.ndim != 3:
        raise ValueError(f"conv2d: input must be (C, H, W), got {x.shape}")
    co, ci, k, k2 = w.shape
    if k != k2 or k not in (1, 3):
        raise ValueError(f"conv2d: kernel must be 1x1 or 3x3, got {k}x{k2}")
    if ci != x.shape[0]:
        raise ValueError(f"conv2d: kernel expects {ci} channels, input has {x.shape[0]}")
    if b is not None and b.shape != (co,):
        raise ValueError(f"conv2d: bias shape {b.shape}, expected ({co},)")
    _, h, wd = x.shape
    cols = _im2col(x.data, k)
    w2 = w.data.reshape(co, -1)
    out = w2 @ cols
    if b is not None:
        out += b.data[:, None]

    def backward(g):
        g2 = g.reshape(co, h * wd)
        gx = _col2im(w2.T @ g2, x.shape, k) if x.requires_grad else None
        gw = (g2 @ cols.T).reshape(w.shape) if w.requires_grad else None
        gb = g2.sum(axis=1) if b is not None and b.requires_grad else None
        return gx, gw, gb

    inputs = (x, w) if b is None else (x, w, b)
    return custom_op(out.reshape(co, h, wd), inputs, backward)


@lru_cache(maxsize=None)
def resize_matrix(n_in, n_out):
    """Linear-interpolation matrix with half-pixel centres and clamped edges."""
    m = np.zeros((n_out, n_in))
    ratio = n_in / n_out
    for o in range(n_out):
        src = min(max((o + 0.5) * ratio - 0.5, 0.0), n_in - 1)
        i0 = int(np.floor(src))
        i1 = min(i0 + 1, n_in - 1)
        t = src - i0
        m[o, i0] += 1 - t
        m[o, i1] += t
    m.setflags(write=False)
    return m


def resize_array(x, size):
    uh, uw = resize_matrix(x.shape[-2], size[0]), resize_matrix(x.shape[-1], size[1])
    return uh @ x @ uw.T


def upsample2x_array(x):
    return resize_array(x, (2 * x.shape[-2], 2 * x.shape[-1]))


def resize(x, size):
    """Bilinear resampling of every channel to spatial `size`."""
    uh, uw = resize_matrix(x.shape[1], size[0]), resize_matrix(x.shape[2], size[1])
    return custom_op(uh @ x.data @ uw.T, (x,), lambda g: (uh.T @ g @ uw,))


def upsample2x(x):
    """Bilinear x2 upsampling."""
    return resize(x, (2 * x.shape[1], 2 * x.shape[2]))


def avgpool2x_array(x):
    c, h, w = x.shape
    return x.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def avgpool2x(x):
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"avgpool2x: odd spatial size {x.shape}")

    def backward(g):
        return (np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) / 4.0,)

    return custom_op(avgpool2x_array(x.data), (x,), backward)


def channel_norm(x, gamma, beta, eps=1e-5):
    """Per-channel standardisation over space followed by an affine map."""
    c = x.shape[0]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"channel_norm: affine shapes {gamma.shape}, {beta.shape} for {c} channels")
    mu = x.data.mean(axis=(1, 2), keepdims=True)
    sd = np.sqrt(x.data.var(axis=(1, 2), keepdims=True) + eps)
    xhat = (x.data - mu) / sd
    out = gamma.data[:, None, None] * xhat + beta.data[:, None, None]

    def backward(g):
        dgamma = np.sum(g * xhat, axis=(1, 2))
        dbeta = np.sum(g, axis=(1, 2))
        dxhat = g * gamma.data[:, None, None]
        dx = (dxhat - dxhat.mean(axis=(1, 2), keepdims=True)
              - xhat * np.mean(dxhat * xhat, axis=(1, 2), keepdims=True)) / sd
        return dx, dgamma, dbeta

    return custom_op(out, (x, gamma, beta), backward)


# ---
# reverse pass

def backward(tape: Tape, loss: Tensor) -> dict:
    """Propagate d(loss) back through `tape`.

    Sets ``.grad`` on every leaf tensor that requires grad and appears on the
    tape (zeros if it does not influence the loss) and returns
    ``{tensor: grad}`` for those leaves.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    produced = {id(n.out) for n in tape.nodes}
    if id(loss) not in produced:
        raise ValueError("loss is not on the tape")
    leaves = OrderedDict()
    for node in tape.nodes:
        for t in node.inputs:
            if t.requires_grad and id(t) not in produced:
                leaves.setdefault(id(t), t)

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        for t, gi in zip(node.inputs, node.backward(g)):
            if gi is None or not t.requires_grad:
                continue
            prev = grads.get(id(t))
            grads[id(t)] = gi if prev is None else prev + gi

    out = {}
    for key, t in leaves.items():
        t.grad = grads.get(key, np.zeros_like(t.data))
        out[t] = t.grad
    return out


# ---
# parameters and optimiser

def arch_fingerprint(spec: dict) -> str:
    blob = json.dumps(spec, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class NetworkParams:
    """Ordered, uniquely named trainable tensors tagged with an architecture hash."""

    def __init__(self, tensors, fingerprint: str, meta=None):
        self.meta = dict(meta or {})  # run metadata, not part of equality
        self.tensors = OrderedDict()
        for name, value in tensors:
            if name in self.tensors:
                raise ValueError(f"duplicate parameter name {name!r}")
            t = value if isinstance(value, Tensor) else Tensor(value)
            self.tensors[name] = Tensor(t.data, requires_grad=True, name=name)
        self.fingerprint = fingerprint

    def __getitem__(self, name):
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.items())

    def __len__(self):
        return len(self.tensors)

    def names(self):
        return list(self.tensors)

    def num_values(self):
        return sum(t.data.size for t in self.tensors.values())

    def copy(self):
        return NetworkParams(((k, v.data.copy()) for k, v in self), self.fingerprint, self.meta)

    def check(self, fingerprint: str):
        if fingerprint != self.fingerprint:
            raise ValueError(f"parameter fingerprint {self.fingerprint} does not match architecture {fingerprint}")

    def equal(self, other) -> bool:
        return (self.fingerprint == other.fingerprint and self.names() == other.names()
                and all(np.array_equal(a.data, b.data) for (_, a), (_, b) in zip(self, other)))


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: NetworkParams, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update.

    `grads` maps parameter name to gradient array; missing names count as zero.
    Returns new ``(params, state)``; the inputs are left untouched.
    """
    t = state.step + 1
    m_new, v_new, updated = {}, {}, []
    for name, p in params:
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        m = beta1 * state.m.get(name, 0.0) + (1 - beta1) * g
        v = beta2 * state.v.get(name, 0.0) + (1 - beta2) * g * g
        mhat = m / (1 - beta1 ** t)
        vhat = v / (1 - beta2 ** t)
        updated.append((name, p.data - lr * mhat / (np.sqrt(vhat) + eps)))
        m_new[name], v_new[name] = m, v
    return NetworkParams(updated, params.fingerprint, params.meta), AdamState(t, m_new, v_new)


def param_grads(params: NetworkParams) -> dict:
    """Collect ``.grad`` of each parameter by name (after :func:`backward`)."""
    return {name: (t.grad if t.grad is not None else np.zeros_like(t.data)) for name, t in params}
