import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from angioseg import ops


def conv2d_loops(x, k, bias=None, stride=1, pad=0):
    b, cin, h, w = x.shape
    cout, _, kh, kw = k.shape
    xp = np.zeros((b, cin, h + 2 * pad, w + 2 * pad))
    xp[:, :, pad : pad + h, pad : pad + w] = x
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((b, cout, ho, wo))
    for n in range(b):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for c in range(cin):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[n, c, i * stride + u, j * stride + v] * k[o, c, u, v]
                    out[n, o, i, j] = acc + (0.0 if bias is None else bias[o])
    return out


def test_conv2d_ones_center_is_nine():
    out = ops.conv2d(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), padding=1)
    assert out[0, 0, 1, 1] == 9.0


@pytest.mark.parametrize("k", [1, 3, 5])
def test_conv2d_dirac_identity(rng, k):
    x = rng.normal(size=(2, 3, 7, 6))
    ker = np.zeros((3, 3, k, k))
    for c in range(3):
        ker[c, c, k // 2, k // 2] = 1.0
    np.testing.assert_array_equal(ops.conv2d(x, ker, padding=k // 2), x)


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0)])
def test_conv2d_matches_loop_nest(rng, stride, pad):
    x = rng.normal(size=(1, 2, 5, 5))
    k = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    np.testing.assert_allclose(ops.conv2d(x, k, b, stride, pad), conv2d_loops(x, k, b, stride, pad),
                               rtol=0, atol=1e-12)


def test_conv2d_output_size_formula(rng):
    x = rng.normal(size=(1, 1, 9, 8))
    out = ops.conv2d(x, rng.normal(size=(1, 1, 3, 3)), stride=2, padding=1)
    assert out.shape == (1, 1, (9 + 2 - 3) // 2 + 1, (8 + 2 - 3) // 2 + 1)


def test_conv2d_channel_mismatch_raises(rng):
    with pytest.raises(ops.ShapeError):
        ops.conv2d(rng.normal(size=(1, 2, 5, 5)), rng.normal(size=(1, 3, 3, 3)))


def test_conv2d_even_kernel_rejected(rng):
    with pytest.raises(ops.ShapeError):
        ops.conv2d(rng.normal(size=(1, 1, 5, 5)), rng.normal(size=(1, 1, 2, 2)))


def test_conv2d_linearity(rng):
    x, y = rng.normal(size=(2, 1, 2, 6, 6))
    k = rng.normal(size=(2, 2, 3, 3))
    a, b = 1.7, -0.3
    np.testing.assert_allclose(ops.conv2d(a * x + b * y, k, padding=1),
                               a * ops.conv2d(x, k, padding=1) + b * ops.conv2d(y, k, padding=1),
                               atol=1e-10)


def test_depthwise_matches_grouped_loops(rng):
    x = rng.normal(size=(2, 3, 6, 7))
    k = rng.normal(size=(3, 1, 5, 5))
    ref = np.concatenate([conv2d_loops(x[:, c : c + 1], k[c : c + 1], pad=2) for c in range(3)], axis=1)
    np.testing.assert_allclose(ops.depthwise_conv2d(x, k), ref, atol=1e-12)


def test_depthwise_delta_and_channel_separation(rng):
    x = rng.normal(size=(1, 2, 6, 6))
    delta = np.zeros((2, 1, 5, 5))
    delta[:, 0, 2, 2] = 1.0
    np.testing.assert_array_equal(ops.depthwise_conv2d(x, delta), x)
    x[:, 1] = 0.0
    out = ops.depthwise_conv2d(x, rng.normal(size=(2, 1, 5, 5)))
    assert np.all(out[:, 1] == 0.0)


def test_depthwise_channel_count_error(rng):
    with pytest.raises(ops.ShapeError):
        ops.depthwise_conv2d(rng.normal(size=(1, 2, 6, 6)), rng.normal(size=(3, 1, 5, 5)))


def test_conv1d_identity_and_impulse(rng):
    x = rng.normal(size=(2, 3, 9))
    np.testing.assert_array_equal(ops.conv1d_causal(x, np.ones((3, 1, 1))), x)
    imp = np.zeros((1, 1, 5))
    imp[0, 0, 0] = 1.0
    a, b = 0.3, -1.2
    out = ops.conv1d_causal(imp, np.array([[[a, b]]]))
    np.testing.assert_array_equal(out[0, 0], [b, a, 0, 0, 0])


def test_conv1d_causality_bit_exact(rng):
    x = rng.normal(size=(1, 4, 16))
    k = rng.normal(size=(4, 1, 4))
    base = ops.conv1d_causal(x, k)
    for t in range(16):
        y = x.copy()
        y[..., t:] += rng.normal(size=y[..., t:].shape)
        np.testing.assert_array_equal(ops.conv1d_causal(y, k)[..., :t], base[..., :t])


def test_activation_values():
    assert ops.softplus(np.array(0.0)) == pytest.approx(math.log(2.0), abs=1e-15)
    assert ops.silu(np.array(0.0)) == 0.0
    assert ops.sigmoid(np.array(0.0)) == 0.5
    assert ops.softplus(np.array(80.0)) == pytest.approx(80.0 + math.log1p(math.exp(-80.0)), rel=1e-15)
    assert ops.softplus(np.array(-80.0)) == pytest.approx(math.exp(-80.0), rel=1e-12)
    assert ops.softplus(np.array(1000.0)) == 1000.0
    assert ops.sigmoid(np.array(-1000.0)) == 0.0
    np.testing.assert_array_equal(ops.leaky_relu(np.array([-2.0, 3.0])), [-0.02, 3.0])


@given(st.lists(st.floats(-700, 700), min_size=2, max_size=40))
@settings(max_examples=60, deadline=None)
def test_activation_monotone_and_softplus_bound(vals):
    x = np.sort(np.array(vals))
    for f in (ops.softplus, ops.sigmoid, ops.leaky_relu):
        assert np.all(np.diff(f(x)) >= 0)
    xp = x[x >= 0]
    assert np.all(np.diff(ops.silu(xp)) >= 0)
    assert np.all(ops.softplus(x) > np.maximum(x, 0) - 1e-12)


def test_batch_norm(rng):
    x = rng.normal(size=(2, 3, 4, 4))
    one, zero = np.ones(3), np.zeros(3)
    np.testing.assert_allclose(ops.batch_norm_inference(x, zero, one, one, zero), x, rtol=1e-5)
    beta = rng.normal(size=3)
    out = ops.batch_norm_inference(x, rng.normal(size=3), rng.uniform(0.5, 2, 3), zero, beta)
    np.testing.assert_array_equal(out, np.broadcast_to(beta[None, :, None, None], x.shape))
    mean, var, gamma = rng.normal(size=3), rng.uniform(0.1, 3, 3), rng.normal(size=3)
    out = ops.batch_norm_inference(x, mean, var, gamma, beta)
    n, c, i, j = 1, 2, 3, 0
    ref = (x[n, c, i, j] - mean[c]) / math.sqrt(var[c] + 1e-5) * gamma[c] + beta[c]
    assert out[n, c, i, j] == pytest.approx(ref, abs=1e-14)
    with pytest.raises(ops.ShapeError):
        ops.batch_norm_inference(x, zero[:2], one[:2], one[:2], zero[:2])


def test_rms_norm_gated(rng):
    y = rng.normal(size=(2, 3, 8))
    g = rng.normal(size=8)
    assert np.all(ops.rms_norm_gated(y, np.zeros_like(y), g) == 0.0)
    c, z = -1.5, np.full((1, 1, 8), 40.0)
    out = ops.rms_norm_gated(np.full((1, 1, 8), c), z, g)
    np.testing.assert_allclose(out[0, 0], np.sign(c * 40.0) * g, rtol=1e-9)
    # invariant up to the 1e-6 epsilon inside the square root
    zc = np.full_like(y, 3.0)
    np.testing.assert_allclose(ops.rms_norm_gated(7.0 * y, zc, g), ops.rms_norm_gated(y, zc, g), rtol=1e-6)


def test_nearest_upsample():
    assert np.all(ops.nearest_upsample(np.full((1, 1, 1, 1), 7.0), 2) == 7.0)
    x = np.array([[[[1.0, 0.0], [0.0, 1.0]]]])
    np.testing.assert_array_equal(ops.nearest_upsample(x, 1), x)
    out = ops.nearest_upsample(x, 2)
    for i in range(4):
        for j in range(4):
            assert out[0, 0, i, j] == x[0, 0, i // 2, j // 2]
