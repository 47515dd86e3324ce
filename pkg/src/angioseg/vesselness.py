"""Multi-scale Hessian vesselness and the channel attention that weights it.

The filter smooths the image at each scale, takes Sobel second derivatives,
sorts the Hessian eigenvalues by magnitude and scores each pixel by how
line-like (small eigenvalue ratio) and how strong (eigenvalue norm) the local
structure is.  Per-scale maps are fused by a pixelwise maximum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ops import ShapeError, as_tensor, relu, sigmoid

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()
# A Sobel pair smooths with binomial [1,2,1] taps on top of the Gaussian,
# adding roughly unit variance to the effective derivative scale.
SOBEL_VARIANCE = 1.0


@dataclass(frozen=True)
class VesselnessConfig:
    sigmas: tuple[float, ...] = (1.0, 2.0, 3.0)
    beta: float = 0.5
    c: float | str = "auto"
    eps_eig: float = 1e-12
    eps_ratio: float = 1e-12
    dark_vessels: bool = True
    scale_normalize: bool = True

    def __post_init__(self):
        if not self.sigmas or any(s <= 0 for s in self.sigmas):
            raise ValueError("sigmas must be non-empty and strictly positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.c != "auto" and not (isinstance(self.c, (int, float)) and self.c > 0):
            raise ValueError("c must be positive or 'auto'")


@dataclass
class VesselnessField:
    per_scale: list[np.ndarray]
    fused: np.ndarray
    eig1: np.ndarray
    eig2: np.ndarray
    sigmas: tuple[float, ...] = field(default=())

    def argmax_scale(self) -> np.ndarray:
        """Index of the winning scale at each pixel."""
        return np.argmax(np.stack(self.per_scale), axis=0)


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _correlate_axis(image: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    r = len(k) // 2
    pad = [(0, 0)] * image.ndim
    pad[axis] = (r, r)
    # 'symmetric' mirrors including the edge sample (half-sample reflection)
    p = np.pad(image, pad, mode="symmetric")
    n = image.shape[axis]
    out = np.zeros_like(image)
    for i, w in enumerate(k):
        if w != 0.0:
            out += w * np.take(p, np.arange(i, i + n), axis=axis)
    return out


def gaussian_smooth(image, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, radius ``ceil(3*sigma)``, reflected borders."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    image = as_tensor(image)
    k = gaussian_kernel1d(sigma)
    return _correlate_axis(_correlate_axis(image, k, 0), k, 1)


def _correlate3x3(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    p = np.pad(image, 1, mode="symmetric")
    h, w = image.shape
    out = np.zeros_like(image)
    for i in range(3):
        for j in range(3):
            if kernel[i, j] != 0.0:
                out += kernel[i, j] * p[i : i + h, j : j + w]
    return out


def hessian(image) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Second derivatives from repeated 3x3 Sobel filtering.

    The raw Sobel operator carries a gain of 8 per application, so the
    returned entries are 64x the continuous second derivatives.
    """
    image = as_tensor(image)
    if image.ndim != 2 or min(image.shape) < 3:
        raise ShapeError(f"hessian needs a 2-D image of at least 3x3, got {image.shape}")
    gx = _correlate3x3(image, SOBEL_X)
    gy = _correlate3x3(image, SOBEL_Y)
    dxx = _correlate3x3(gx, SOBEL_X)
    dyy = _correlate3x3(gy, SOBEL_Y)
    dxy = _correlate3x3(gx, SOBEL_Y)
    return dxx, dxy, dyy


def hessian_eigenvalues(dxx, dxy, dyy, eps: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues of the 2x2 symmetric Hessian, ordered so ``|l1| >= |l2|``."""
    dxx, dxy, dyy = (as_tensor(a) for a in (dxx, dxy, dyy))
    if not (dxx.shape == dxy.shape == dyy.shape):
        raise ShapeError("Hessian components must share a shape")
    half_trace = 0.5 * (dxx + dyy)
    root = np.sqrt(0.25 * (dxx - dyy) ** 2 + dxy * dxy + eps)
    a, b = half_trace + root, half_trace - root
    swap = np.abs(b) > np.abs(a)
    return np.where(swap, b, a), np.where(swap, a, b)


def structure_strength(l1, l2) -> np.ndarray:
    return np.sqrt(as_tensor(l1) ** 2 + as_tensor(l2) ** 2)


def vesselness(l1, l2, config: VesselnessConfig = VesselnessConfig(), c: float | None = None) -> np.ndarray:
    """Per-pixel line score in [0, 1].

    Bright ridges have a strongly negative large eigenvalue; pixels where it
    is positive are gated to zero.  ``c`` overrides the config's structure
    sensitivity; with ``config.c == "auto"`` it defaults to half the maximum
    structure strength of this map.
    """
    l1, l2 = as_tensor(l1), as_tensor(l2)
    rb = np.abs(l2) / (np.abs(l1) + config.eps_ratio)
    s = structure_strength(l1, l2)
    if c is None:
        c = 0.5 * float(s.max()) if config.c == "auto" else float(config.c)
    if c <= 0.0:
        return np.zeros_like(s)
    v = np.exp(-(rb * rb) / (2.0 * config.beta**2)) * (1.0 - np.exp(-(s * s) / (2.0 * c * c)))
    return np.where(l1 > 0, 0.0, v)


def _prepare(image: np.ndarray, dark_vessels: bool) -> np.ndarray:
    if not dark_vessels:
        return image
    lo, hi = float(image.min()), float(image.max())
    if hi <= lo:
        return np.zeros_like(image)
    return 1.0 - (image - lo) / (hi - lo)


def case_forward(image, config: VesselnessConfig = VesselnessConfig()) -> VesselnessField:
    """Vesselness at every scale of ``config.sigmas`` plus the fused maximum.

    With ``scale_normalize`` the Hessian at scale sigma is multiplied by the
    effective derivative variance ``sigma**2 + SOBEL_VARIANCE`` so responses
    are comparable across scales, and an automatic ``c`` is taken as half the
    largest structure strength over all scales.
    """
    img = as_tensor(image)
    if img.ndim != 2:
        raise ShapeError(f"case_forward expects a 2-D image, got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    img = _prepare(img, config.dark_vessels)
    eigs = []
    for sigma in config.sigmas:
        norm = sigma * sigma + SOBEL_VARIANCE if config.scale_normalize else 1.0
        dxx, dxy, dyy = (norm * d for d in hessian(gaussian_smooth(img, sigma)))
        eigs.append(hessian_eigenvalues(dxx, dxy, dyy, config.eps_eig))
    if config.c == "auto":
        c = 0.5 * max(float(structure_strength(l1, l2).max()) for l1, l2 in eigs)
    else:
        c = float(config.c)
    maps = [vesselness(l1, l2, config, c) for l1, l2 in eigs]
    fused = np.max(np.stack(maps), axis=0)
    l1, l2 = eigs[-1]
    return VesselnessField(maps, fused, l1, l2, tuple(config.sigmas))


def case_channels(images, config: VesselnessConfig = VesselnessConfig()) -> np.ndarray:
    """Per-scale vesselness maps for a ``(B, 1, H, W)`` batch as ``(B, S, H, W)``."""
    images = as_tensor(images)
    if images.ndim != 4 or images.shape[1] != 1:
        raise ShapeError(f"expected (B,1,H,W) images, got {images.shape}")
    return np.stack([np.stack(case_forward(im[0], config).per_scale) for im in images])


def channel_attention(features, w1, w2) -> np.ndarray:
    """Squeeze-excitation style channel weighting.

    ``w1`` is ``(hidden, C)`` and ``w2`` is ``(C, hidden)``; the gate is
    ``sigmoid(w2 @ relu(w1 @ gap(features)))``.
    """
    features, w1, w2 = as_tensor(features), as_tensor(w1), as_tensor(w2)
    if features.ndim != 4:
        raise ShapeError(f"features must be (B,C,H,W), got {features.shape}")
    c = features.shape[1]
    if w1.ndim != 2 or w2.ndim != 2 or w1.shape[1] != c or w2.shape != (c, w1.shape[0]):
        raise ShapeError(f"attention weights {w1.shape}, {w2.shape} do not fit {c} channels")
    pooled = features.mean(axis=(2, 3))  # (B, C)
    gate = sigmoid(relu(pooled @ w1.T) @ w2.T)
    return features * gate[:, :, None, None]
