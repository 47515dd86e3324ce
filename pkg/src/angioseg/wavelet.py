"""Orthonormal 2-D Haar filter bank and progressive high-frequency perception.

For each 2x2 block ``[[a, b], [c, d]]``::

    LL = (a + b + c + d) / 2        LH = (a - b + c - d) / 2
    HL = (a + b - c - d) / 2        HH = (a - b - c + d) / 2

which is the separable product of the 1-D taps ``[1, 1]/sqrt(2)`` and
``[1, -1]/sqrt(2)``.  The transform is orthonormal, so energy is preserved.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import ShapeError, as_tensor, depthwise_conv2d

Bands = tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]


def haar_wt(x, return_pad: bool = False):
    """One analysis level on ``(B, C, H, W)``; odd sizes are edge-replicated."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"haar_wt expects (B, C, H, W), got {x.shape}")
    ph, pw = x.shape[2] % 2, x.shape[3] % 2
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="edge")
    a = x[:, :, 0::2, 0::2]
    b = x[:, :, 0::2, 1::2]
    c = x[:, :, 1::2, 0::2]
    d = x[:, :, 1::2, 1::2]
    bands = (
        (a + b + c + d) / 2.0,
        (a - b + c - d) / 2.0,
        (a + b - c - d) / 2.0,
        (a - b - c + d) / 2.0,
    )
    return (bands, (ph, pw)) if return_pad else bands


def haar_iwt(ll, lh, hl, hh, pad: tuple[int, int] = (0, 0)) -> np.ndarray:
    """Exact inverse of :func:`haar_wt`; ``pad`` rows/cols are cropped."""
    ll, lh, hl, hh = (as_tensor(t) for t in (ll, lh, hl, hh))
    if not (ll.shape == lh.shape == hl.shape == hh.shape):
        raise ShapeError("sub-bands must share a shape")
    bsz, c, h, w = ll.shape
    out = np.empty((bsz, c, 2 * h, 2 * w))
    out[:, :, 0::2, 0::2] = (ll + lh + hl + hh) / 2.0
    out[:, :, 0::2, 1::2] = (ll - lh + hl - hh) / 2.0
    out[:, :, 1::2, 0::2] = (ll + lh - hl - hh) / 2.0
    out[:, :, 1::2, 1::2] = (ll - lh - hl + hh) / 2.0
    ph, pw = pad
    return out[:, :, : 2 * h - ph, : 2 * w - pw]


@dataclass
class WaveletPyramid:
    levels: list[Bands]
    pads: list[tuple[int, int]]

    @property
    def depth(self) -> int:
        return len(self.levels)


def max_depth(h: int, w: int, min_size: int = 1) -> int:
    """Deepest level whose sub-bands are still at least ``min_size`` square."""
    n = 0
    while h > 1 and w > 1 and min(-(-h // 2), -(-w // 2)) >= min_size:
        h, w = -(-h // 2), -(-w // 2)
        n += 1
    return n


def phfp_decompose(y, n: int) -> WaveletPyramid:
    y = as_tensor(y)
    if n < 1:
        raise ValueError("decomposition depth must be >= 1")
    if n > max_depth(y.shape[2], y.shape[3]):
        raise ValueError(f"depth {n} too deep for {y.shape[2]}x{y.shape[3]} input")
    levels, pads = [], []
    cur = y
    for _ in range(n):
        bands, pad = haar_wt(cur, return_pad=True)
        levels.append(bands)
        pads.append(pad)
        cur = bands[0]
    return WaveletPyramid(levels, pads)


@dataclass
class PHFPParams:
    """Depthwise kernels, each ``(C, 1, 5, 5)``: ``level_kernels[j]`` holds the
    (LH, HL, HH) refiners of level ``j + 1``; ``direct`` filters the input."""

    level_kernels: list[tuple[np.ndarray, np.ndarray, np.ndarray]]
    direct: np.ndarray

    @property
    def depth(self) -> int:
        return len(self.level_kernels)

    def to_dict(self) -> dict[str, np.ndarray]:
        d = {"direct.kernel": self.direct}
        for j, (lh, hl, hh) in enumerate(self.level_kernels, 1):
            d[f"level{j}.lh.kernel"] = lh
            d[f"level{j}.hl.kernel"] = hl
            d[f"level{j}.hh.kernel"] = hh
        return d

    @classmethod
    def from_dict(cls, d) -> "PHFPParams":
        depth = sum(1 for k in d if k.endswith(".lh.kernel"))
        levels = [
            tuple(as_tensor(d[f"level{j}.{b}.kernel"]) for b in ("lh", "hl", "hh"))
            for j in range(1, depth + 1)
        ]
        return cls(levels, as_tensor(d["direct.kernel"]))

    @classmethod
    def delta(cls, channels: int, depth: int) -> "PHFPParams":
        k = np.zeros((channels, 1, 5, 5))
        k[:, 0, 2, 2] = 1.0
        return cls([(k, k, k) for _ in range(depth)], k)


def init_phfp(rng: np.random.Generator, channels: int, depth: int) -> PHFPParams:
    s = 1.0 / 5.0  # 1/sqrt(fan_in) for a 5x5 depthwise tap set
    mk = lambda: rng.uniform(-s, s, (channels, 1, 5, 5))
    return PHFPParams([(mk(), mk(), mk()) for _ in range(depth)], mk())


def phfp_reconstruct(pyramid: WaveletPyramid, params: PHFPParams) -> np.ndarray:
    """Coarse-to-fine synthesis; each finer level adds the coarser
    reconstruction to its low band before inversion."""
    if pyramid.depth != params.depth:
        raise ValueError(f"pyramid depth {pyramid.depth} != parameter depth {params.depth}")
    rec = None
    for j in range(pyramid.depth - 1, -1, -1):
        ll, lh, hl, hh = pyramid.levels[j]
        k_lh, k_hl, k_hh = params.level_kernels[j]
        low = ll if rec is None else ll + rec
        if low.shape != ll.shape:
            raise ShapeError(f"level {j + 1}: reconstruction {rec.shape} != low band {ll.shape}")
        rec = haar_iwt(low, depthwise_conv2d(lh, k_lh), depthwise_conv2d(hl, k_hl),
                       depthwise_conv2d(hh, k_hh), pyramid.pads[j])
    return rec


def phfp_forward(y, params: PHFPParams) -> np.ndarray:
    y = as_tensor(y)
    rec = phfp_reconstruct(phfp_decompose(y, params.depth), params)
    return depthwise_conv2d(y, params.direct) + rec
