import numpy as np
import pytest

from conftest import conv_float_oracle, make_layer, random_tensor
from nvc.errors import ConfigError, GraphError
from nvc.qtensor import (
    ConvLayerSpec,
    QuantTensor,
    add_q,
    concat_q,
    conv_q,
    quantize_array,
    quantize_multiplier,
    requantize_q,
    sub_q,
)


def _identity_layer():
    m, s = quantize_multiplier(1.0)
    return ConvLayerSpec(
        in_channels=1,
        out_channels=1,
        kernel=(1, 1),
        stride=1,
        mode="forward",
        activation="none",
        weights=np.ones((1, 1, 1, 1), dtype=np.int8),
        weight_scales=np.array([1.0]),
        biases=np.zeros(1, dtype=np.int32),
        multipliers=np.array([m]),
        shifts=np.array([s]),
        in_scale=1.0,
        in_zero_point=0,
        out_scale=1.0,
        out_zero_point=0,
    )


# -- QuantTensor basics -------------------------------------------------------

def test_dequantize_requantize_identity():
    rng = np.random.default_rng(0)
    t = random_tensor(rng, 2, 5, 7, scale=0.37, zero_point=-9)
    again = quantize_array(t.dequantize(), t.scale, t.zero_point)
    assert np.array_equal(again.data, t.data)


def test_tensor_validation():
    with pytest.raises(ConfigError):
        QuantTensor(np.zeros((2, 2), dtype=np.int8), 1.0, 0)
    with pytest.raises(ConfigError):
        QuantTensor(np.zeros((1, 2, 2), dtype=np.int16), 1.0, 0)
    with pytest.raises(ConfigError):
        QuantTensor(np.zeros((1, 2, 2), dtype=np.int8), -1.0, 0)
    with pytest.raises(ConfigError):
        QuantTensor(np.zeros((1, 2, 2), dtype=np.int8), 1.0, 300)


# -- convolution ---------------------------------------------------------------

def test_identity_kernel_passthrough():
    rng = np.random.default_rng(1)
    x = random_tensor(rng, 1, 4, 4)
    assert np.array_equal(conv_q(x, _identity_layer()).data, x.data)


def test_stride2_output_dims():
    rng = np.random.default_rng(2)
    layer = make_layer(rng, 1, 3, 3, 2, out_scale=0.3)
    x = random_tensor(rng, 1, 8, 8)
    assert conv_q(x, layer).shape == (3, 4, 4)


def test_odd_dims_ceil_rule():
    rng = np.random.default_rng(3)
    layer = make_layer(rng, 2, 2, 5, 2, out_scale=0.3)
    x = random_tensor(rng, 2, 9, 13)
    assert conv_q(x, layer).shape == (2, 5, 7)


def test_transposed_doubles_dims():
    rng = np.random.default_rng(4)
    layer = make_layer(rng, 2, 2, 5, 2, mode="transposed", out_scale=0.4)
    x = random_tensor(rng, 2, 6, 5)
    assert conv_q(x, layer).shape == (2, 12, 10)


@pytest.mark.parametrize("mode,kernel", [
    ("forward", 1), ("forward", 3), ("forward", 5),
    ("transposed", 2), ("transposed", 3), ("transposed", 4), ("transposed", 5),
])
def test_conv_matches_float_oracle(mode, kernel):
    rng = np.random.default_rng(kernel * 17 + (mode == "transposed"))
    for trial in range(6):
        cin = int(rng.integers(1, 5))
        cout = int(rng.integers(1, 5))
        stride = 2 if mode == "transposed" else int(rng.choice([1, 2]))
        in_scale = float(rng.uniform(0.4, 2.0))
        out_scale = float(rng.uniform(0.1, 0.4))
        in_zp = int(rng.integers(-30, 31))
        out_zp = int(rng.integers(-30, 31))
        act = "relu" if trial % 2 else "none"
        layer = make_layer(
            rng, cin, cout, kernel, stride, mode=mode, activation=act,
            in_scale=in_scale, in_zp=in_zp, out_scale=out_scale, out_zp=out_zp,
        )
        x = random_tensor(rng, cin, 7, 6, scale=in_scale, zero_point=in_zp)
        got = conv_q(x, layer).data.astype(np.int64)
        want = conv_float_oracle(x, layer)
        assert np.abs(got - want).max() <= 1


def test_unit_scale_equals_exact_integer_convolution():
    """With unit scales, zero offsets, and no activation, the op is exact
    integer convolution (kept in range by small operands)."""
    rng = np.random.default_rng(5)
    cin, cout, k = 2, 3, 3
    weights = rng.integers(-3, 4, (cout, cin, k, k)).astype(np.int8)
    m, s = quantize_multiplier(1.0)
    layer = ConvLayerSpec(
        in_channels=cin, out_channels=cout, kernel=(k, k), stride=1,
        mode="forward", activation="none",
        weights=weights, weight_scales=np.ones(cout),
        biases=np.zeros(cout, dtype=np.int32),
        multipliers=np.full(cout, m), shifts=np.full(cout, s),
        in_scale=1.0, in_zero_point=0, out_scale=1.0, out_zero_point=0,
    )
    x = random_tensor(rng, cin, 6, 6)
    x = QuantTensor((x.data // 16).astype(np.int8), 1.0, 0)
    got = conv_q(x, layer).data.astype(np.int64)
    xp = np.pad(x.data.astype(np.int64), ((0, 0), (1, 1), (1, 1)))
    want = np.zeros_like(got)
    for oc in range(cout):
        for i in range(6):
            for j in range(6):
                want[oc, i, j] = np.sum(
                    xp[:, i : i + k, j : j + k] * weights[oc].astype(np.int64)
                )
    assert np.array_equal(got, want)


def test_relu_idempotent():
    rng = np.random.default_rng(6)
    layer = make_layer(rng, 2, 2, 3, 1, activation="relu", out_zp=-5, out_scale=0.3)
    x = random_tensor(rng, 2, 5, 5)
    out = conv_q(x, layer)
    assert out.data.min() >= -5
    clamped = np.maximum(out.data, -5)
    assert np.array_equal(out.data, clamped)


def test_down_up_restores_dims():
    rng = np.random.default_rng(7)
    down = make_layer(rng, 1, 2, 5, 2, out_scale=0.5)
    up = make_layer(rng, 2, 1, 5, 2, mode="transposed", in_scale=0.5, out_scale=1.0)
    x = random_tensor(rng, 1, 32, 48)
    assert conv_q(conv_q(x, down), up).shape == (1, 32, 48)


def test_determinism():
    rng = np.random.default_rng(8)
    layer = make_layer(rng, 3, 4, 5, 2, activation="relu", out_scale=0.2)
    x = random_tensor(rng, 3, 16, 16)
    a = conv_q(x, layer)
    b = conv_q(x, layer)
    assert np.array_equal(a.data, b.data)


def test_channel_mismatch_rejected():
    rng = np.random.default_rng(9)
    layer = make_layer(rng, 2, 2, 3, 1)
    with pytest.raises(ConfigError):
        conv_q(random_tensor(rng, 3, 4, 4), layer)


def test_grid_mismatch_rejected():
    rng = np.random.default_rng(10)
    layer = make_layer(rng, 2, 2, 3, 1, in_scale=1.0)
    with pytest.raises(ConfigError):
        conv_q(random_tensor(rng, 2, 4, 4, scale=0.5), layer)


def test_accumulator_guard():
    rng = np.random.default_rng(11)
    with pytest.raises(ConfigError):
        make_layer(rng, 6000, 1, 5, 1)


def test_transposed_requires_stride2():
    rng = np.random.default_rng(12)
    with pytest.raises(ConfigError):
        make_layer(rng, 1, 1, 3, 1, mode="transposed")


# -- concat ---------------------------------------------------------------------

def test_concat_shapes():
    rng = np.random.default_rng(13)
    a = random_tensor(rng, 3, 4, 4)
    b = random_tensor(rng, 5, 4, 4)
    out = concat_q(a, b)
    assert out.shape == (8, 4, 4)
    assert np.array_equal(out.data[:3], a.data)
    assert np.array_equal(out.data[3:], b.data)


def test_concat_empty_identity():
    rng = np.random.default_rng(14)
    a = random_tensor(rng, 3, 4, 4)
    empty = QuantTensor(np.empty((0, 4, 4), dtype=np.int8), 1.0, 0)
    assert np.array_equal(concat_q(a, empty).data, a.data)


def test_concat_dequantize_oracle():
    rng = np.random.default_rng(15)
    a = random_tensor(rng, 2, 3, 3, scale=0.7, zero_point=4)
    b = random_tensor(rng, 3, 3, 3, scale=0.7, zero_point=4)
    stacked = np.concatenate([a.dequantize(), b.dequantize()], axis=0)
    assert np.array_equal(concat_q(a, b).dequantize(), stacked)


def test_concat_mismatch_rejected():
    rng = np.random.default_rng(16)
    a = random_tensor(rng, 1, 4, 4)
    with pytest.raises(GraphError):
        concat_q(a, random_tensor(rng, 1, 5, 4))
    with pytest.raises(GraphError):
        concat_q(a, random_tensor(rng, 1, 4, 4, scale=0.5))


# -- add / sub / requantize -------------------------------------------------------

def test_add_zero_tensor_identity():
    rng = np.random.default_rng(17)
    x = random_tensor(rng, 2, 4, 4, scale=0.5, zero_point=3)
    zero = QuantTensor(np.full((2, 4, 4), 3, dtype=np.int8), 0.5, 3)
    out = add_q(x, zero, 0.5, 3)
    assert np.array_equal(out.data, x.data)


def test_sub_self_is_zero_point():
    rng = np.random.default_rng(18)
    x = random_tensor(rng, 2, 4, 4, scale=0.5, zero_point=3)
    assert np.all(sub_q(x, x, 1.0, -7).data == -7)


def test_add_sub_match_float_oracle():
    rng = np.random.default_rng(19)
    for trial in range(30):
        sa = float(rng.uniform(0.1, 3.0))
        sb = float(rng.uniform(0.1, 3.0))
        so = float(rng.uniform(0.1, 3.0))
        za, zb, zo = (int(v) for v in rng.integers(-40, 41, 3))
        a = random_tensor(rng, 2, 5, 5, scale=sa, zero_point=za)
        b = random_tensor(rng, 2, 5, 5, scale=sb, zero_point=zb)
        for op, sign in ((add_q, 1), (sub_q, -1)):
            got = op(a, b, so, zo).data.astype(np.float64)
            real = a.dequantize() + sign * b.dequantize()
            want = np.clip(np.round(real / so) + zo, -128, 127)
            assert np.abs(got - want).max() <= 1


def test_add_shape_mismatch_rejected():
    rng = np.random.default_rng(20)
    with pytest.raises(GraphError):
        add_q(random_tensor(rng, 1, 4, 4), random_tensor(rng, 1, 4, 5), 1.0, 0)


def test_requantize_round_trip_identity():
    rng = np.random.default_rng(21)
    x = random_tensor(rng, 2, 6, 6, scale=0.25, zero_point=0)
    assert requantize_q(x, 0.25, 0) is x
    moved = requantize_q(x, 0.125, 10)
    # halving the step doubles the centered values (within saturation)
    centered = x.data.astype(np.int64)
    expect = np.clip(centered * 2 + 10, -128, 127)
    assert np.array_equal(moved.data, expect)


def test_quantize_multiplier_bounds():
    m, s = quantize_multiplier(1.0)
    assert m == 1 << 30 and s == 30
    with pytest.raises(ConfigError):
        quantize_multiplier(0.0)
    with pytest.raises(ConfigError):
        quantize_multiplier(float(2**40))
