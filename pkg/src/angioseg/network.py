"""Five-stage encoder/decoder segmentation network (forward pass only).

Data flow for a ``(B, 1, H, W)`` image::

    E1 = enc1(X)                                   stage 1, full resolution
    F1 = attention(concat(E1, vesselness(X)))
    E2..E4 = enc_i(down_{i-1}(...)),  E5 = enc5(down4(E4))
    D5 = aads(E5)                                  axial Mamba2 bottleneck
    D_i = CBL2(phfp(concat(conv1x1(up2(D_{i+1})), E_i)))   for i = 4..1
    prob = sigmoid(conv1x1(D1))

Every learned tensor is read from a :class:`~angioseg.weights.WeightStore`
under the key names produced by :func:`required_keys`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .mamba2 import AADSParams, aads_mamba2_forward, init_aads
from .vesselness import VesselnessConfig, case_channels, channel_attention
from .wavelet import PHFPParams, max_depth, phfp_forward
from .weights import WeightStore

BN_KEYS = ("mean", "var", "gamma", "beta")


class MissingWeightError(KeyError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    stage_channels: tuple[int, ...] = (16, 32, 64, 128, 256)
    input_size: tuple[int, int] = (64, 64)
    vesselness: VesselnessConfig = field(default_factory=VesselnessConfig)
    mamba_d_model: int = 64
    d_state: int = 16
    head_dim: int = 8
    expand: int = 2
    d_conv: int = 4
    chunk_size: int = 16
    phfp_depth: int = 3
    phfp_min_size: int = 4
    leaky_slope: float = ops.LEAKY_SLOPE
    attention_reduction: int = 4
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        ch = self.stage_channels
        if len(ch) != 5:
            raise ValueError("exactly 5 stage widths are required")
        if any(b <= a for a, b in zip(ch, ch[1:])):
            raise ValueError("stage widths must be strictly increasing")
        if any(s % 16 or s < 16 for s in self.input_size):
            raise ValueError("input size must be a positive multiple of 16")

    @property
    def case_channels(self) -> int:
        return len(self.vesselness.sigmas)

    @property
    def attention_hidden(self) -> int:
        return max(1, (self.stage_channels[0] + self.case_channels) // self.attention_reduction)

    def phfp_depth_at(self, h: int, w: int) -> int:
        """Configured depth clamped so the coarsest sub-band is >= phfp_min_size."""
        return max(1, min(self.phfp_depth, max_depth(h, w, self.phfp_min_size)))


@dataclass
class SegmentationOutput:
    prob: np.ndarray  # (B, 1, H, W)
    threshold: float = 0.5
    features: dict[str, np.ndarray] | None = None

    @property
    def mask(self) -> np.ndarray:
        return self.prob >= self.threshold


# --- weight layout -------------------------------------------------------------


def _conv_shapes(prefix, cout, cin, k):
    return {f"{prefix}.weight": (cout, cin, k, k), f"{prefix}.bias": (cout,)}


def _bn_shapes(prefix, c):
    return {f"{prefix}.{k}": (c,) for k in BN_KEYS}


def _cbl2_shapes(prefix, cin, cout):
    s = _conv_shapes(f"{prefix}.conv1", cout, cin, 3)
    s.update(_bn_shapes(f"{prefix}.bn1", cout))
    s.update(_conv_shapes(f"{prefix}.conv2", cout, cout, 3))
    s.update(_bn_shapes(f"{prefix}.bn2", cout))
    return s


def _stage_sizes(h: int, w: int) -> list[tuple[int, int]]:
    return [(h >> i, w >> i) for i in range(5)]


def required_keys(config: NetworkConfig) -> dict[str, tuple]:
    """Every weight key outside the Mamba bottleneck, with its shape.

    PHFP depths depend on the decoder stage sizes, hence on ``input_size``.
    """
    h, w = config.input_size
    c = config.stage_channels
    shapes: dict[str, tuple] = {}
    shapes.update(_cbl2_shapes("enc1", 1, c[0]))
    for i in range(2, 6):
        shapes.update(_cbl2_shapes(f"enc{i}", c[i - 1], c[i - 1]))
    c_att = c[0] + config.case_channels
    shapes["case.attn.w1"] = (config.attention_hidden, c_att)
    shapes["case.attn.w2"] = (c_att, config.attention_hidden)
    for i in range(1, 5):
        cin = c_att if i == 1 else c[i - 1]
        shapes.update(_conv_shapes(f"down{i}.conv", c[i], cin, 3))
        shapes.update(_bn_shapes(f"down{i}.bn", c[i]))
    shapes["bottleneck.fuse.weight"] = (c[4], 2 * c[4], 1, 1)
    sizes = _stage_sizes(h, w)
    for i in range(1, 5):
        ci = c[i - 1]
        shapes[f"dec{i}.up.weight"] = (ci, c[i], 1, 1)
        depth = config.phfp_depth_at(*sizes[i - 1])
        for j in range(1, depth + 1):
            for band in ("lh", "hl", "hh"):
                shapes[f"dec{i}.phfp.level{j}.{band}.kernel"] = (2 * ci, 1, 5, 5)
        shapes[f"dec{i}.phfp.direct.kernel"] = (2 * ci, 1, 5, 5)
        shapes.update(_cbl2_shapes(f"dec{i}", 2 * ci, ci))
    shapes["head.weight"] = (1, c[0], 1, 1)
    shapes["head.bias"] = (1,)
    return shapes


def _uniform(rng, shape, fan_in):
    s = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-s, s, size=shape)


def init_weights(config: NetworkConfig = NetworkConfig(), seed: int | None = None,
                 dtype: str = "f32") -> WeightStore:
    """Seeded fan-in-scaled uniform weights with neutral batch norm."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    store = WeightStore()
    shapes = required_keys(config)
    for name, shape in shapes.items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("mean", "beta"):
            arr = np.zeros(shape)
        elif leaf in ("var", "gamma"):
            arr = np.ones(shape)
        elif leaf == "bias":
            wshape = shapes[name[: -len("bias")] + "weight"]
            arr = _uniform(rng, shape, int(np.prod(wshape[1:])))
        elif name.startswith("case.attn"):
            arr = _uniform(rng, shape, shape[1])
        else:
            arr = _uniform(rng, shape, int(np.prod(shape[1:])))
        store.add(name, arr, dtype)
    aads = init_aads(rng, config.stage_channels[4], config.mamba_d_model,
                     d_state=config.d_state, head_dim=config.head_dim,
                     expand=config.expand, d_conv=config.d_conv)
    for k, v in aads.to_dict().items():
        if k != "fuse.weight":
            store.add(f"bottleneck.aads.{k}", v, dtype)
    return store


def check_weights(weights: WeightStore, config: NetworkConfig) -> None:
    shapes = required_keys(config)
    missing = [k for k in shapes if k not in weights]
    if not any(k.startswith("bottleneck.aads.") for k in weights):
        missing.append("bottleneck.aads.*")
    if missing:
        raise MissingWeightError(f"missing weights: {', '.join(missing[:8])}"
                                 + (" ..." if len(missing) > 8 else ""))
    for k, shape in shapes.items():
        if weights[k].shape != tuple(shape):
            raise ops.ShapeError(f"weight {k} has shape {weights[k].shape}, expected {shape}")


# --- building blocks -------------------------------------------------------------


def _cbl(x, wts, conv, bn, slope, stride=1):
    y = ops.conv2d(x, wts[f"{conv}.weight"], wts[f"{conv}.bias"], stride=stride, padding=1)
    y = ops.batch_norm_inference(y, *(wts[f"{bn}.{k}"] for k in BN_KEYS))
    return ops.leaky_relu(y, slope)


def encoder_block(x, wts, prefix: str, slope: float = ops.LEAKY_SLOPE) -> np.ndarray:
    """Two conv3x3 + BN + LeakyReLU units (dropout is the identity at inference)."""
    y = _cbl(x, wts, f"{prefix}.conv1", f"{prefix}.bn1", slope)
    return _cbl(y, wts, f"{prefix}.conv2", f"{prefix}.bn2", slope)


def downsample(x, wts, prefix: str, slope: float = ops.LEAKY_SLOPE) -> np.ndarray:
    x = ops.as_tensor(x)
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ops.ShapeError(f"downsample needs even spatial dims, got {x.shape[2:]}")
    return _cbl(x, wts, f"{prefix}.conv", f"{prefix}.bn", slope, stride=2)


def decoder_stage(d_next, e_skip, wts, prefix: str, slope: float = ops.LEAKY_SLOPE,
                  phfp=phfp_forward) -> np.ndarray:
    d_next, e_skip = ops.as_tensor(d_next), ops.as_tensor(e_skip)
    if (2 * d_next.shape[2], 2 * d_next.shape[3]) != e_skip.shape[2:]:
        raise ops.ShapeError(f"decoder input {d_next.shape[2:]} is not half of skip {e_skip.shape[2:]}")
    u = ops.conv2d(ops.nearest_upsample(d_next, 2), wts[f"{prefix}.up.weight"])
    y = np.concatenate([u, e_skip], axis=1)
    phfp_keys = {k[len(prefix) + 6:]: v for k, v in wts.items() if k.startswith(f"{prefix}.phfp.")}
    y = phfp(y, PHFPParams.from_dict(phfp_keys))
    return encoder_block(y, wts, prefix, slope)


def aads_params(weights) -> AADSParams:
    d = {k[len("bottleneck.aads."):]: v for k, v in weights.items() if k.startswith("bottleneck.aads.")}
    d["fuse.weight"] = weights["bottleneck.fuse.weight"]
    return AADSParams.from_dict(d)


def network_forward(image, weights: WeightStore, config: NetworkConfig = NetworkConfig(),
                    return_features: bool = False, case_maps=None) -> SegmentationOutput:
    """Probability map for a ``(B, 1, H, W)`` image batch in [0, 1].

    ``case_maps`` substitutes precomputed ``(B, S, H, W)`` vesselness channels.
    """
    x = ops.as_tensor(image)
    if x.ndim == 2:
        x = x[None, None]
    if x.ndim != 4 or x.shape[1] != 1:
        raise ops.ShapeError(f"expected a (B, 1, H, W) image, got {x.shape}")
    h, w = x.shape[2:]
    if (h, w) != tuple(config.input_size):
        raise ops.ShapeError(f"input size {h}x{w} does not match the configured "
                             f"{config.input_size[0]}x{config.input_size[1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("image contains non-finite values")
    check_weights(weights, config)
    slope = config.leaky_slope
    feats: dict[str, np.ndarray] = {}

    e = [encoder_block(x, weights, "enc1", slope)]
    vmaps = case_channels(x, config.vesselness) if case_maps is None else ops.as_tensor(case_maps)
    f1 = channel_attention(np.concatenate([e[0], vmaps], axis=1),
                           weights["case.attn.w1"], weights["case.attn.w2"])
    feats["case"] = vmaps
    feats["attn"] = f1
    cur = f1
    for i in range(1, 5):
        cur = downsample(cur, weights, f"down{i}", slope)
        feats[f"down{i}"] = cur
        cur = encoder_block(cur, weights, f"enc{i + 1}", slope)
        e.append(cur)
    for i, ei in enumerate(e, 1):
        feats[f"enc{i}"] = ei

    d = aads_mamba2_forward(e[4], aads_params(weights), config.chunk_size)
    feats["bottleneck"] = d
    for i in range(4, 0, -1):
        d = decoder_stage(d, e[i - 1], weights, f"dec{i}", slope)
        feats[f"dec{i}"] = d
    logits = ops.conv2d(d, weights["head.weight"], weights["head.bias"])
    prob = ops.sigmoid(logits)
    return SegmentationOutput(prob, config.threshold, feats if return_features else None)


def mse_loss(pred, target) -> float:
    pred, target = ops.as_tensor(pred), ops.as_tensor(target)
    if pred.shape != target.shape:
        raise ops.ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    return float(np.mean((target - pred) ** 2))
