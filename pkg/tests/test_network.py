import numpy as np
import pytest

import reference_impl as ref
from angioseg import ops
from angioseg.network import (MissingWeightError, NetworkConfig, decoder_stage, downsample,
                              encoder_block, init_weights, mse_loss, network_forward, required_keys)
from angioseg.phantom import phantom_corpus
from angioseg.wavelet import PHFPParams, phfp_forward
from angioseg.weights import WeightStore


@pytest.fixture(scope="module")
def cfg64():
    return NetworkConfig(input_size=(64, 64))


@pytest.fixture(scope="module")
def weights64(cfg64):
    return init_weights(cfg64, seed=0, dtype="f64")


@pytest.fixture(scope="module")
def phantom64():
    image, _ = phantom_corpus("tubes", seed=0, n=1, size=64)[0]
    return image[None, None]


def _cbl2_store(prefix, cin, cout, kernel_fn):
    s = WeightStore()
    for j, ci in ((1, cin), (2, cout)):
        s.add(f"{prefix}.conv{j}.weight", kernel_fn(cout, ci), "f64")
        s.add(f"{prefix}.conv{j}.bias", np.zeros(cout), "f64")
        for k, v in (("mean", 0.0), ("var", 1.0), ("gamma", 1.0), ("beta", 0.0)):
            s.add(f"{prefix}.bn{j}.{k}", np.full(cout, v), "f64")
    return s


def _with(store, **overrides):
    """Copy of ``store`` with some tensors replaced (keys use '__' for '.')."""
    new = {k.replace("__", "."): v for k, v in overrides.items()}
    return WeightStore({k: new.get(k, v) for k, v in store.items()}, dtype="f64")


def _delta(cout, cin):
    w = np.zeros((cout, cin, 3, 3))
    for c in range(min(cout, cin)):
        w[c, c, 1, 1] = 1.0
    return w


def test_encoder_block_zero_weights(rng):
    s = _cbl2_store("enc1", 4, 4, lambda co, ci: np.zeros((co, ci, 3, 3)))
    assert np.all(encoder_block(rng.normal(size=(1, 4, 8, 8)), s, "enc1") == 0.0)


def test_encoder_block_delta_is_leaky_relu(rng):
    s = _cbl2_store("enc1", 3, 3, _delta)
    x = rng.normal(size=(1, 3, 8, 8))
    y = encoder_block(x, s, "enc1")
    # variance 1 plus BN epsilon rescales by 1/sqrt(1 + eps) per unit
    g = 1.0 / np.sqrt(1.0 + ops.BN_EPS)
    expected = ops.leaky_relu(ops.leaky_relu(x) * g) * g
    assert np.max(np.abs(y - expected)) < 1e-12
    pos = np.abs(x)
    assert np.allclose(encoder_block(pos, s, "enc1"), pos * g * g, atol=1e-12)


def test_encoder_block_missing_key():
    with pytest.raises(KeyError):
        encoder_block(np.zeros((1, 1, 4, 4)), WeightStore(), "enc1")


def test_downsample_equals_decimated_stride_one(rng, weights64):
    x = rng.normal(size=(1, 32, 16, 16))
    w, b = weights64["down2.conv.weight"], weights64["down2.conv.bias"]
    y = downsample(x, weights64, "down2")
    full = ops.conv2d(x, w, b, stride=1, padding=1)[:, :, ::2, ::2]
    bn = [weights64[f"down2.bn.{k}"] for k in ("mean", "var", "gamma", "beta")]
    assert y.shape == (1, 64, 8, 8)
    assert np.max(np.abs(y - ops.leaky_relu(ops.batch_norm_inference(full, *bn)))) < 1e-12
    with pytest.raises(ops.ShapeError):
        downsample(np.zeros((1, 32, 7, 8)), weights64, "down2")


def test_decoder_shape_walk(rng, weights64):
    d = rng.normal(size=(1, 256, 4, 4))
    e = rng.normal(size=(1, 128, 8, 8))
    assert decoder_stage(d, e, weights64, "dec4").shape == (1, 128, 8, 8)
    with pytest.raises(ops.ShapeError):
        decoder_stage(d, rng.normal(size=(1, 128, 6, 6)), weights64, "dec4")


def test_decoder_delta_phfp_doubles(rng, weights64):
    d = rng.normal(size=(1, 256, 4, 4))
    e = rng.normal(size=(1, 128, 8, 8))
    delta = lambda y, _p: phfp_forward(y, PHFPParams.delta(y.shape[1], 1))
    a = decoder_stage(d, e, weights64, "dec4", phfp=delta)
    b = decoder_stage(d, e, weights64, "dec4", phfp=lambda y, _p: 2.0 * y)
    assert np.max(np.abs(a - b)) < 1e-10


def test_decoder_zero_skip_only_upsampled_channels_matter(rng, weights64):
    d = rng.normal(size=(1, 256, 4, 4))
    zero = np.zeros((1, 128, 8, 8))
    base = decoder_stage(d, zero, weights64, "dec4")
    # the skip half of conv1 sees only zeros (all of PHFP is depthwise)
    k = weights64["dec4.conv1.weight"]
    w = _with(weights64, dec4__conv1__weight=np.concatenate([k[:, :128], rng.normal(size=k[:, 128:].shape)],
                                                           axis=1))
    assert np.max(np.abs(decoder_stage(d, zero, w, "dec4") - base)) < 1e-12


def test_forward_shape_range_determinism(cfg64, weights64, phantom64):
    a = network_forward(phantom64, weights64, cfg64, return_features=True)
    b = network_forward(phantom64, weights64, cfg64)
    assert a.prob.shape == (1, 1, 64, 64)
    assert np.all((a.prob > 0) & (a.prob < 1))
    assert a.prob.tobytes() == b.prob.tobytes()
    assert a.mask.dtype == bool


def test_stage_shape_schedule(cfg64, weights64, phantom64):
    f = network_forward(phantom64, weights64, cfg64, return_features=True).features
    c = cfg64.stage_channels
    for i in range(1, 6):
        assert f[f"enc{i}"].shape == (1, c[i - 1], 64 >> (i - 1), 64 >> (i - 1))
    assert f["case"].shape == (1, 3, 64, 64)
    assert f["attn"].shape == (1, c[0] + 3, 64, 64)
    assert f["bottleneck"].shape == (1, c[4], 4, 4)
    for i in range(1, 5):
        assert f[f"dec{i}"].shape == (1, c[i - 1], 64 >> (i - 1), 64 >> (i - 1))


def test_golden_checksum_matches_reference(cfg64, weights64, phantom64):
    prob = network_forward(phantom64, weights64, cfg64).prob
    expected = ref.forward(phantom64, dict(weights64.items()))
    assert np.max(np.abs(prob - expected)) < 1e-8
    assert abs(float(prob.sum()) - float(expected.sum())) < 1e-8


def test_zero_head_gives_half(cfg64, weights64, phantom64):
    w = _with(weights64, head__weight=np.zeros((1, 16, 1, 1)), head__bias=np.zeros(1))
    assert np.all(network_forward(phantom64, w, cfg64).prob == 0.5)


def test_case_ablation_hook(rng, cfg64, weights64, phantom64):
    # zero vesselness and w2 = 0 make the gate a constant 0.5, so down1 sees
    # 0.5 * E1 through the first c1 input channels only
    w = _with(weights64, case__attn__w2=np.zeros_like(weights64["case.attn.w2"]))
    zeros = np.zeros((1, 3, 64, 64))
    f = network_forward(phantom64, w, cfg64, return_features=True, case_maps=zeros).features
    no_case = _with(w, down1__conv__weight=w["down1.conv.weight"][:, :16])
    e1 = encoder_block(phantom64, w, "enc1")
    assert np.max(np.abs(downsample(0.5 * e1, no_case, "down1") - f["down1"])) < 1e-12


def test_missing_key_is_named(cfg64, weights64, phantom64):
    w = WeightStore({k: v for k, v in weights64.items() if k != "dec2.up.weight"})
    with pytest.raises(MissingWeightError, match="dec2.up.weight"):
        network_forward(phantom64, w, cfg64)


def test_wrong_input_size(cfg64, weights64):
    with pytest.raises(ops.ShapeError):
        network_forward(np.zeros((1, 1, 32, 32)), weights64, cfg64)


def test_layout_and_init(cfg64):
    keys = required_keys(cfg64)
    assert keys["enc1.conv1.weight"] == (16, 1, 3, 3)
    assert keys["down1.conv.weight"] == (32, 19, 3, 3)
    assert keys["bottleneck.fuse.weight"] == (256, 512, 1, 1)
    assert keys["dec1.phfp.direct.kernel"] == (32, 1, 5, 5)
    assert "dec1.phfp.level3.hh.kernel" in keys and "dec1.phfp.level4.hh.kernel" not in keys
    assert "dec4.phfp.level1.lh.kernel" in keys and "dec4.phfp.level2.lh.kernel" not in keys
    a, b = init_weights(cfg64, seed=5), init_weights(cfg64, seed=5)
    assert a.to_bytes() == b.to_bytes()
    assert a.to_bytes() != init_weights(cfg64, seed=6).to_bytes()


def test_config_validation():
    with pytest.raises(ValueError):
        NetworkConfig(stage_channels=(16, 32, 64, 128))
    with pytest.raises(ValueError):
        NetworkConfig(stage_channels=(16, 16, 64, 128, 256))
    with pytest.raises(ValueError):
        NetworkConfig(input_size=(40, 64))


def test_mse_loss():
    assert mse_loss(np.ones(4), np.ones(4)) == 0.0
    assert mse_loss(np.zeros(4), np.ones(4)) == 1.0
    assert mse_loss(np.array([0.5, 1.0]), np.array([0.0, 1.0])) == 0.125
    with pytest.raises(ops.ShapeError):
        mse_loss(np.zeros(2), np.zeros(3))
