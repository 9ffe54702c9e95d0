"""
Differentiable primitives for the ResUNet: convolution, GELU, group
normalization, resampling, skip plumbing and the MSE loss.

Every primitive takes Tensors, computes its forward in numpy and hands a
backward closure to record_op.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from core.errors import DivisibilityError, ShapeError, ValidationError
from core.tensor import Tensor, record_op
from utils.config import GROUP_NORM_EPS, GROUP_NORM_GROUPS


__all__ = [
    "conv2d",
    "gelu",
    "group_norm",
    "default_groups",
    "upsample_nearest",
    "downsample",
    "upsample",
    "concat_channels",
    "add",
    "scale_per_channel",
    "reduce_sum",
    "mse_loss",
]


_GELU_C = math.sqrt(2.0 / math.pi)


def _require_4d(x: Tensor, op: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{op}: atteso tensore (n, c, h, w), ricevuto {x.shape}", op=op, shape=x.shape)


# ────────────────────────────────────────────────────────────────────────────────
# Convoluzione (im2col via sliding_window_view + tensordot)
# ────────────────────────────────────────────────────────────────────────────────

def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, pad: Optional[int] = None) -> Tensor:
    """Convoluzione 2D con kernel 1×1 o 3×3; pad di default = "same" a stride 1."""
    _require_4d(x, "conv2d")
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ShapeError("conv2d: peso atteso (c_out, c_in, k, k)", shape=weight.shape)
    c_out, c_in, k, _ = weight.shape
    if k not in (1, 3):
        raise ValidationError(f"conv2d: kernel {k} non supportato", kernel=k)
    if stride not in (1, 2):
        raise ValidationError(f"conv2d: stride {stride} non supportato", stride=stride)
    if x.shape[1] != c_in:
        raise ShapeError(f"conv2d: canali input {x.shape[1]} != {c_in}", expected=c_in, got=x.shape[1])
    if bias.shape != (c_out,):
        raise ShapeError("conv2d: bias di lunghezza errata", expected=c_out, shape=bias.shape)
    if pad is None:
        pad = (k - 1) // 2

    n, _, h, w = x.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    windows = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    h_out, w_out = windows.shape[2], windows.shape[3]

    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3]))  # (n, ho, wo, c_out)
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2)) + bias.data[None, :, None, None]

    def backward_fn(grad: np.ndarray):
        grad_b = grad.sum(axis=(0, 2, 3))
        grad_w = np.tensordot(grad, windows, axes=([0, 2, 3], [0, 2, 3]))
        grad_xp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                contrib = np.tensordot(grad, weight.data[:, :, i, j], axes=([1], [0]))  # (n, ho, wo, c_in)
                grad_xp[:, :, i:i + stride * (h_out - 1) + 1:stride, j:j + stride * (w_out - 1) + 1:stride] += \
                    contrib.transpose(0, 3, 1, 2)
        grad_x = grad_xp[:, :, pad:pad + h, pad:pad + w] if pad else grad_xp
        return grad_x, grad_w, grad_b

    return record_op("conv2d", (x, weight, bias), out, backward_fn)


# ────────────────────────────────────────────────────────────────────────────────
# Attivazione e normalizzazione
# ────────────────────────────────────────────────────────────────────────────────

def gelu(x: Tensor) -> Tensor:
    """GELU, approssimazione tanh."""
    v = x.data
    inner = _GELU_C * (v + 0.044715 * v ** 3)
    t = np.tanh(inner)
    out = 0.5 * v * (1.0 + t)

    def backward_fn(grad: np.ndarray):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * v ** 2)
        local = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t ** 2) * d_inner
        return (grad * local,)

    return record_op("gelu", (x,), out, backward_fn)


def default_groups(channels: int, groups: int = GROUP_NORM_GROUPS) -> int:
    """8 gruppi, oppure un gruppo per canale sotto gli 8 canali."""
    return channels if channels < groups else groups


def group_norm(x: Tensor, groups: int, gamma: Tensor, beta: Tensor, eps: float = GROUP_NORM_EPS) -> Tensor:
    _require_4d(x, "group_norm")
    n, c, h, w = x.shape
    if groups <= 0 or c % groups != 0:
        raise DivisibilityError(f"group_norm: {c} canali non divisibili in {groups} gruppi",
                                channels=c, groups=groups)
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError("group_norm: gamma/beta di lunghezza errata", channels=c)

    xg = x.data.reshape(n, groups, -1)
    mean = xg.mean(axis=-1, keepdims=True)
    var = xg.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat_g = (xg - mean) * inv_std
    xhat = xhat_g.reshape(n, c, h, w)
    out = xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

    def backward_fn(grad: np.ndarray):
        grad_gamma = (grad * xhat).sum(axis=(0, 2, 3))
        grad_beta = grad.sum(axis=(0, 2, 3))
        dxhat = (grad * gamma.data[None, :, None, None]).reshape(n, groups, -1)
        grad_x = inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat_g * (dxhat * xhat_g).mean(axis=-1, keepdims=True)
        )
        return grad_x.reshape(n, c, h, w), grad_gamma, grad_beta

    return record_op("group_norm", (x, gamma, beta), out, backward_fn)


# ────────────────────────────────────────────────────────────────────────────────
# Resampling
# ────────────────────────────────────────────────────────────────────────────────

def upsample_nearest(x: Tensor) -> Tensor:
    """Nearest-neighbor ×2: ogni pixel diventa un blocco 2×2."""
    _require_4d(x, "upsample_nearest")
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def backward_fn(grad: np.ndarray):
        return (grad.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return record_op("upsample_nearest", (x,), out, backward_fn)


def downsample(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Convoluzione 3×3 a stride 2 (appresa)."""
    _require_4d(x, "downsample")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise DivisibilityError(f"downsample: dimensioni spaziali dispari {x.shape[2:]}", shape=x.shape)
    return conv2d(x, weight, bias, stride=2, pad=1)


def upsample(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Nearest-neighbor ×2 seguito da convoluzione 3×3."""
    return conv2d(upsample_nearest(x), weight, bias, stride=1, pad=1)


# ────────────────────────────────────────────────────────────────────────────────
# Plumbing
# ────────────────────────────────────────────────────────────────────────────────

def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    _require_4d(a, "concat_channels")
    _require_4d(b, "concat_channels")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"concat_channels: {a.shape} incompatibile con {b.shape}")
    split = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def backward_fn(grad: np.ndarray):
        return grad[:, :split], grad[:, split:]

    return record_op("concat_channels", (a, b), out, backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} != {b.shape}")

    def backward_fn(grad: np.ndarray):
        return grad, grad

    return record_op("add", (a, b), a.data + b.data, backward_fn)


def scale_per_channel(x: Tensor, lam: Tensor) -> Tensor:
    _require_4d(x, "scale_per_channel")
    if lam.shape != (x.shape[1],):
        raise ShapeError(f"scale_per_channel: λ di lunghezza {lam.shape} per {x.shape[1]} canali")
    factor = lam.data[None, :, None, None]

    def backward_fn(grad: np.ndarray):
        return grad * factor, (grad * x.data).sum(axis=(0, 2, 3))

    return record_op("scale_per_channel", (x, lam), x.data * factor, backward_fn)


def reduce_sum(x: Tensor) -> Tensor:
    """Somma di tutti gli elementi (scalare)."""

    def backward_fn(grad: np.ndarray):
        return (np.broadcast_to(grad, x.shape).copy(),)

    return record_op("reduce_sum", (x,), np.asarray(x.data.sum(), dtype=x.dtype), backward_fn)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Media dell'errore quadratico su campioni, step e pixel."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: {pred.shape} != {target.shape}")
    diff = pred.data - target.data
    count = diff.size
    out = np.asarray(np.mean(diff * diff), dtype=pred.dtype)

    def backward_fn(grad: np.ndarray):
        g = grad * 2.0 * diff / count
        return g, -g

    return record_op("mse_loss", (pred, target), out, backward_fn)
