"""Dense tensor primitives used by every network component.

Tensors are plain ``numpy.ndarray`` objects in float64, laid out as
``(B, C, H, W)`` for images and ``(B, C, L)`` for sequences.  Every function
here is pure: inputs are never written to.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BN_EPS = 1e-5
RMS_EPS = 1e-6
LEAKY_SLOPE = 0.01


class ShapeError(ValueError):
    """Raised when tensor shapes violate an operation's contract."""


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def conv2d(x, kernel, bias=None, stride: int = 1, padding: int = 0) -> np.ndarray:
    """2-D cross-correlation with zero padding.

    ``x`` is ``(B, Cin, H, W)`` and ``kernel`` is ``(Cout, Cin, kh, kw)``.
    Output size follows ``floor((H + 2*padding - kh) / stride) + 1``.
    """
    x = as_tensor(x)
    kernel = as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and kernel, got {x.shape} and {kernel.shape}")
    cout, cin, kh, kw = kernel.shape
    if x.shape[1] != cin:
        raise ShapeError(f"kernel expects {cin} input channels, input has {x.shape[1]}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"kernel extents must be odd, got {kh}x{kw}")
    if stride < 1 or padding < 0:
        raise ShapeError("stride must be positive and padding non-negative")
    h, w = x.shape[2] + 2 * padding, x.shape[3] + 2 * padding
    if h < kh or w < kw:
        raise ShapeError(f"padded input {h}x{w} smaller than kernel {kh}x{kw}")
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    if kh == 1 and kw == 1:
        patches = x[:, :, ::stride, ::stride]
        out = np.einsum("bchw,oc->bohw", patches, kernel[:, :, 0, 0], optimize=True)
    else:
        # (B, Cin, H', W', kh, kw) view, then one contraction over (Cin, kh, kw)
        win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        out = np.tensordot(win, kernel, axes=([1, 4, 5], [1, 2, 3]))
        out = np.moveaxis(out, 3, 1)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (cout,):
            raise ShapeError(f"bias shape {bias.shape} != ({cout},)")
        out = out + bias[None, :, None, None]
    return np.ascontiguousarray(out)


def depthwise_conv2d(x, kernel) -> np.ndarray:
    """Per-channel 5x5 cross-correlation with padding 2 (spatial size kept)."""
    x = as_tensor(x)
    kernel = as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4 or kernel.shape[1] != 1:
        raise ShapeError(f"depthwise_conv2d expects (B,C,H,W) and (C,1,k,k), got {x.shape}, {kernel.shape}")
    if kernel.shape[0] != x.shape[1]:
        raise ShapeError(f"kernel has {kernel.shape[0]} channels, input has {x.shape[1]}")
    k = kernel.shape[2]
    if kernel.shape[3] != k or k % 2 == 0:
        raise ShapeError(f"depthwise kernel must be square and odd, got {kernel.shape[2:]}")
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    return np.einsum("bchwij,cij->bchw", win, kernel[:, 0], optimize=True)


def conv1d_causal(x, kernel, bias=None) -> np.ndarray:
    """Depthwise causal 1-D convolution over the last axis of ``(B, C, L)``.

    The input is left-padded with ``k - 1`` zeros, so output ``t`` sees
    inputs ``t - k + 1 .. t``; the last kernel tap multiplies the current step.
    """
    x = as_tensor(x)
    kernel = as_tensor(kernel)
    if x.ndim != 3 or kernel.ndim != 3 or kernel.shape[1] != 1:
        raise ShapeError(f"conv1d_causal expects (B,C,L) and (C,1,k), got {x.shape}, {kernel.shape}")
    if kernel.shape[0] != x.shape[1]:
        raise ShapeError(f"kernel has {kernel.shape[0]} channels, input has {x.shape[1]}")
    k = kernel.shape[2]
    if k < 1:
        raise ShapeError("kernel width must be >= 1")
    xp = np.pad(x, ((0, 0), (0, 0), (k - 1, 0)))
    win = sliding_window_view(xp, k, axis=2)  # (B, C, L, k)
    out = np.einsum("bclk,ck->bcl", win, kernel[:, 0, :])
    if bias is not None:
        out = out + as_tensor(bias)[None, :, None]
    return out


def sigmoid(x) -> np.ndarray:
    x = as_tensor(x)
    # two-branch form avoids overflow in exp for large |x|
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def silu(x) -> np.ndarray:
    x = as_tensor(x)
    return x * sigmoid(x)


def softplus(x) -> np.ndarray:
    x = as_tensor(x)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def leaky_relu(x, slope: float = LEAKY_SLOPE) -> np.ndarray:
    x = as_tensor(x)
    return np.where(x >= 0, x, slope * x)


def relu(x) -> np.ndarray:
    return np.maximum(as_tensor(x), 0.0)


def batch_norm_inference(x, mean, var, gamma, beta, eps: float = BN_EPS) -> np.ndarray:
    x = as_tensor(x)
    c = x.shape[1]
    params = [as_tensor(p) for p in (mean, var, gamma, beta)]
    for p in params:
        if p.shape != (c,):
            raise ShapeError(f"batch-norm parameter shape {p.shape} != ({c},)")
    mean, var, gamma, beta = params
    if np.any(var < 0):
        raise ValueError("batch-norm variance must be non-negative")
    bshape = (1, c) + (1,) * (x.ndim - 2)
    scale = gamma / np.sqrt(var + eps)
    return (x - mean.reshape(bshape)) * scale.reshape(bshape) + beta.reshape(bshape)


def rms_norm_gated(y, z, gamma, eps: float = RMS_EPS) -> np.ndarray:
    """Gate ``y`` with ``silu(z)`` then RMS-normalise over the last axis."""
    y = as_tensor(y)
    z = as_tensor(z)
    if y.shape != z.shape:
        raise ShapeError(f"y {y.shape} and z {z.shape} must match")
    g = y * silu(z)
    rms = np.sqrt(np.mean(g * g, axis=-1, keepdims=True) + eps)
    return g / rms * as_tensor(gamma)


def nearest_upsample(x, factor: int) -> np.ndarray:
    if factor < 1:
        raise ShapeError("upsample factor must be positive")
    x = as_tensor(x)
    return x.repeat(factor, axis=2).repeat(factor, axis=3)


def linear(x, weight, bias=None) -> np.ndarray:
    """Apply ``weight`` (out, in) to the last axis of ``x``."""
    out = as_tensor(x) @ as_tensor(weight).T
    if bias is not None:
        out = out + as_tensor(bias)
    return out
