"""Mamba2 block, its dual-stream wrapper and the axial-alternating module.

Parameter containers map 1:1 onto weight-file keys through ``to_dict`` /
``from_dict``; the key suffixes are listed on each class.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .ops import ShapeError, as_tensor, conv1d_causal, linear, rms_norm_gated, silu
from .ssd import ssd_chunked, ssm_naive

BLOCK_KEYS = (
    "in_proj.weight", "conv1d.weight", "conv1d.bias", "dt_bias", "A_log", "D",
    "norm.weight", "out_proj.weight",
)


@dataclass
class Mamba2BlockParams:
    in_proj: np.ndarray  # (2*d_inner + 2*N + H, d_model)
    conv_weight: np.ndarray  # (d_inner + 2*N, 1, k_conv)
    conv_bias: np.ndarray  # (d_inner + 2*N,)
    dt_bias: np.ndarray  # (H,)
    A_log: np.ndarray  # (H,)
    D: np.ndarray  # (H,)
    norm_weight: np.ndarray  # (d_inner,)
    out_proj: np.ndarray  # (d_model, d_inner)

    def __post_init__(self):
        h = self.A_log.shape[0]
        d_inner = self.norm_weight.shape[0]
        conv_dim = self.conv_weight.shape[0]
        if d_inner % h:
            raise ShapeError(f"d_inner {d_inner} not divisible by {h} heads")
        if (conv_dim - d_inner) % 2 or conv_dim <= d_inner:
            raise ShapeError(f"conv width {conv_dim} inconsistent with d_inner {d_inner}")
        if self.in_proj.shape[0] != d_inner + conv_dim + h:
            raise ShapeError(f"in_proj rows {self.in_proj.shape[0]} != {d_inner + conv_dim + h}")
        if self.out_proj.shape != (self.in_proj.shape[1], d_inner):
            raise ShapeError(f"out_proj shape {self.out_proj.shape} inconsistent")
        if self.dt_bias.shape != (h,) or self.D.shape != (h,) or self.conv_bias.shape != (conv_dim,):
            raise ShapeError("dt_bias, D or conv bias has the wrong length")

    @property
    def d_model(self) -> int:
        return self.in_proj.shape[1]

    @property
    def d_inner(self) -> int:
        return self.norm_weight.shape[0]

    @property
    def n_heads(self) -> int:
        return self.A_log.shape[0]

    @property
    def head_dim(self) -> int:
        return self.d_inner // self.n_heads

    @property
    def d_state(self) -> int:
        return (self.conv_weight.shape[0] - self.d_inner) // 2

    def to_dict(self) -> dict[str, np.ndarray]:
        vals = (self.in_proj, self.conv_weight, self.conv_bias, self.dt_bias, self.A_log,
                self.D, self.norm_weight, self.out_proj)
        return dict(zip(BLOCK_KEYS, vals))

    @classmethod
    def from_dict(cls, d) -> "Mamba2BlockParams":
        return cls(*(as_tensor(d[k]) for k in BLOCK_KEYS))


def init_mamba2_block(rng: np.random.Generator, d_model: int, d_state: int = 16,
                      head_dim: int = 8, expand: int = 2, d_conv: int = 4,
                      proj_scale: float | None = 0.5) -> Mamba2BlockParams:
    """Seeded test-mode parameters.

    Projections and the causal conv are uniform in ``(-proj_scale, proj_scale)``
    (``None`` selects ``1/sqrt(fan_in)``); ``A`` rates are uniform in [1, 8]
    and ``dt_bias`` is set so that ``softplus(dt_bias)`` lies in [0.001, 0.1].
    """
    d_inner = expand * d_model
    if d_inner % head_dim:
        raise ShapeError(f"d_inner {d_inner} not divisible by head_dim {head_dim}")
    h = d_inner // head_dim
    conv_dim = d_inner + 2 * d_state

    def u(shape, fan_in):
        s = proj_scale if proj_scale is not None else 1.0 / np.sqrt(fan_in)
        return rng.uniform(-s, s, size=shape)

    dt = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), size=h))
    return Mamba2BlockParams(
        in_proj=u((2 * d_inner + 2 * d_state + h, d_model), d_model),
        conv_weight=u((conv_dim, 1, d_conv), d_conv),
        conv_bias=u((conv_dim,), d_conv),
        dt_bias=dt + np.log(-np.expm1(-dt)),  # inverse softplus
        A_log=np.log(rng.uniform(1.0, 8.0, size=h)),
        D=np.ones(h),
        norm_weight=np.ones(d_inner),
        out_proj=u((d_model, d_inner), d_inner),
    )


def mamba2_block_forward(u, params: Mamba2BlockParams, chunk_size: int = 16,
                         scan: Callable | None = None, return_stages: bool = False):
    """Mamba2 inference on ``u`` of shape ``(B, L, d_model)``.

    ``scan`` defaults to the chunked SSD kernel; pass ``ssm_naive`` for the
    sequential reference.  With ``return_stages`` the intermediate tensors are
    returned alongside the output.
    """
    u = as_tensor(u)
    if u.ndim != 3 or u.shape[2] != params.d_model:
        raise ShapeError(f"expected (B, L, {params.d_model}) input, got {u.shape}")
    bsz, length, _ = u.shape
    d_inner, n, h, p = params.d_inner, params.d_state, params.n_heads, params.head_dim

    zxbcdt = linear(u, params.in_proj)
    z = zxbcdt[..., :d_inner]
    xbc = zxbcdt[..., d_inner : 2 * d_inner + 2 * n]
    dt_raw = zxbcdt[..., 2 * d_inner + 2 * n :]

    xbc = conv1d_causal(xbc.transpose(0, 2, 1), params.conv_weight, params.conv_bias)
    xbc = silu(xbc.transpose(0, 2, 1))
    x = xbc[..., :d_inner].reshape(bsz, length, h, p)
    b_in = xbc[..., d_inner : d_inner + n]
    c_in = xbc[..., d_inner + n :]

    if scan is None:
        y_ssd = ssd_chunked(x, params.A_log, b_in, c_in, dt_raw, params.dt_bias, chunk_size)
    else:
        y_ssd = scan(x, params.A_log, b_in, c_in, dt_raw, params.dt_bias)
    y = y_ssd + x * params.D[:, None]
    y = rms_norm_gated(y.reshape(bsz, length, d_inner), z, params.norm_weight)
    out = linear(y, params.out_proj)
    if return_stages:
        stages = {"z": z, "xBC": xbc, "dt_raw": dt_raw, "x": x, "B": b_in, "C": c_in,
                  "ssd": y_ssd, "normed": y}
        return out, stages
    return out


@dataclass
class DSMamba2Params:
    fwd: Mamba2BlockParams
    bwd: Mamba2BlockParams
    lin_in_weight: np.ndarray  # (d_model, C_in)
    lin_in_bias: np.ndarray
    lin_out_weight: np.ndarray  # (C_out, d_model)
    lin_out_bias: np.ndarray

    def to_dict(self) -> dict[str, np.ndarray]:
        d = {f"fwd.{k}": v for k, v in self.fwd.to_dict().items()}
        d.update({f"bwd.{k}": v for k, v in self.bwd.to_dict().items()})
        d.update({
            "lin_in.weight": self.lin_in_weight, "lin_in.bias": self.lin_in_bias,
            "lin_out.weight": self.lin_out_weight, "lin_out.bias": self.lin_out_bias,
        })
        return d

    @classmethod
    def from_dict(cls, d) -> "DSMamba2Params":
        sub = lambda pre: {k[len(pre) + 1:]: v for k, v in d.items() if k.startswith(pre + ".")}
        return cls(
            Mamba2BlockParams.from_dict(sub("fwd")), Mamba2BlockParams.from_dict(sub("bwd")),
            as_tensor(d["lin_in.weight"]), as_tensor(d["lin_in.bias"]),
            as_tensor(d["lin_out.weight"]), as_tensor(d["lin_out.bias"]),
        )

    def swapped(self) -> "DSMamba2Params":
        return replace(self, fwd=self.bwd, bwd=self.fwd)


def init_ds_mamba2(rng, channels: int, d_model: int, out_channels: int | None = None,
                   **block_kw) -> DSMamba2Params:
    c_out = channels if out_channels is None else out_channels
    fwd = init_mamba2_block(rng, d_model, **block_kw)
    bwd = init_mamba2_block(rng, d_model, **block_kw)
    s_in, s_out = 1.0 / np.sqrt(channels), 1.0 / np.sqrt(d_model)
    return DSMamba2Params(
        fwd, bwd,
        rng.uniform(-s_in, s_in, (d_model, channels)), rng.uniform(-s_in, s_in, d_model),
        rng.uniform(-s_out, s_out, (c_out, d_model)), rng.uniform(-s_out, s_out, c_out),
    )


@dataclass
class SequenceBatch:
    """``(N, C, L)`` sequences cut from an image along one axis."""

    data: np.ndarray
    axis: str  # "W" (rows scanned left to right) or "H" (columns top to bottom)
    image_shape: tuple[int, int, int, int]
    flipped: bool = False

    def flip(self) -> "SequenceBatch":
        return SequenceBatch(self.data[..., ::-1], self.axis, self.image_shape, not self.flipped)


def to_sequences(x, axis: str) -> SequenceBatch:
    x = as_tensor(x)
    b, c, h, w = x.shape
    if axis == "W":
        data = x.transpose(0, 2, 1, 3).reshape(b * h, c, w)
    elif axis == "H":
        data = x.transpose(0, 3, 1, 2).reshape(b * w, c, h)
    else:
        raise ValueError(f"axis must be 'W' or 'H', got {axis!r}")
    return SequenceBatch(np.ascontiguousarray(data), axis, (b, c, h, w))


def from_sequences(seq: SequenceBatch) -> np.ndarray:
    if seq.flipped:
        raise ValueError("sequence batch is still flipped; flip back before folding")
    b, _, h, w = seq.image_shape
    c = seq.data.shape[1]
    if seq.axis == "W":
        return seq.data.reshape(b, h, c, w).transpose(0, 2, 1, 3)
    return seq.data.reshape(b, w, c, h).transpose(0, 2, 3, 1)


def ds_mamba2_forward(x, params: DSMamba2Params, chunk_size: int = 16,
                      scan: Callable | None = None) -> np.ndarray:
    """Bidirectional Mamba2 over ``(B, C, L)``: forward stream plus re-flipped
    backward stream, summed, then projected to ``C_out`` channels."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"expected (B, C, L), got {x.shape}")
    x_in = linear(x.transpose(0, 2, 1), params.lin_in_weight, params.lin_in_bias)
    fwd = mamba2_block_forward(x_in, params.fwd, chunk_size, scan)
    bwd = mamba2_block_forward(x_in[:, ::-1], params.bwd, chunk_size, scan)[:, ::-1]
    out = linear(fwd + bwd, params.lin_out_weight, params.lin_out_bias)
    return out.transpose(0, 2, 1)


def _ds_on(seq: SequenceBatch, params, chunk_size, scan) -> SequenceBatch:
    return replace(seq, data=ds_mamba2_forward(seq.data, params, chunk_size, scan))


@dataclass
class AADSParams:
    path1: tuple[DSMamba2Params, DSMamba2Params]  # width then height
    path2: tuple[DSMamba2Params, DSMamba2Params]  # height then width
    fuse_weight: np.ndarray  # (C_out, 2C, 1, 1)

    def to_dict(self) -> dict[str, np.ndarray]:
        d = {}
        for pname, pair in (("path1", self.path1), ("path2", self.path2)):
            for i, ds in enumerate(pair, 1):
                d.update({f"{pname}.ds{i}.{k}": v for k, v in ds.to_dict().items()})
        d["fuse.weight"] = self.fuse_weight
        return d

    @classmethod
    def from_dict(cls, d) -> "AADSParams":
        def ds(prefix):
            pre = prefix + "."
            return DSMamba2Params.from_dict({k[len(pre):]: v for k, v in d.items() if k.startswith(pre)})
        return cls((ds("path1.ds1"), ds("path1.ds2")), (ds("path2.ds1"), ds("path2.ds2")),
                   as_tensor(d["fuse.weight"]))


def init_aads(rng, channels: int, d_model: int, **block_kw) -> AADSParams:
    mk = lambda: init_ds_mamba2(rng, channels, d_model, **block_kw)
    p1 = (mk(), mk())
    p2 = (mk(), mk())
    s = 1.0 / np.sqrt(2 * channels)
    return AADSParams(p1, p2, rng.uniform(-s, s, (channels, 2 * channels, 1, 1)))


def aads_mamba2_forward(x, params: AADSParams, chunk_size: int = 16,
                        scan: Callable | None = None, return_paths: bool = False):
    """Axial-alternating module on ``(B, C, H, W)``.

    Path 1 scans rows then columns, path 2 columns then rows; the two results
    are concatenated on channels and fused by a 1x1 convolution.
    """
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"expected (B, C, H, W), got {x.shape}")
    y1 = from_sequences(_ds_on(to_sequences(x, "W"), params.path1[0], chunk_size, scan))
    y1 = from_sequences(_ds_on(to_sequences(y1, "H"), params.path1[1], chunk_size, scan))
    y2 = from_sequences(_ds_on(to_sequences(x, "H"), params.path2[0], chunk_size, scan))
    y2 = from_sequences(_ds_on(to_sequences(y2, "W"), params.path2[1], chunk_size, scan))
    cat = np.concatenate([y1, y2], axis=1)
    fw = as_tensor(params.fuse_weight)
    if fw.ndim == 4:
        fw = fw[:, :, 0, 0]
    if fw.shape[1] != cat.shape[1]:
        raise ShapeError(f"fuse weight expects {fw.shape[1]} channels, got {cat.shape[1]}")
    out = np.einsum("oc,bchw->bohw", fw, cat)
    return (out, y1, y2) if return_paths else out


__all__ = [
    "Mamba2BlockParams", "DSMamba2Params", "AADSParams", "SequenceBatch",
    "init_mamba2_block", "init_ds_mamba2", "init_aads",
    "mamba2_block_forward", "ds_mamba2_forward", "aads_mamba2_forward",
    "to_sequences", "from_sequences", "ssm_naive",
]
