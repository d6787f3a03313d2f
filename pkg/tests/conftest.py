import numpy as np
import pytest

from nvc.config import default_config
from nvc.entropy import ScaleQuantParams, table_set
from nvc.qtensor import ConvLayerSpec, QuantTensor, quantize_multiplier
from nvc.weights import generate_weights


@pytest.fixture(scope="session")
def params():
    return ScaleQuantParams()


@pytest.fixture(scope="session")
def tables(params):
    return table_set(params)


@pytest.fixture(scope="session")
def small_config():
    """Narrow architecture: full graph shape, test-sized compute."""
    return default_config(
        sender_width=16,
        receiver_width=12,
        latent_channels=24,
        hyper_channels=12,
        gop_length=4,
        partitions=4,
    )


@pytest.fixture(scope="session")
def small_weights(small_config):
    return generate_weights(small_config, seed=42)


def make_layer(
    rng,
    cin,
    cout,
    k,
    stride,
    mode="forward",
    activation="none",
    in_scale=1.0,
    in_zp=0,
    out_scale=1.0,
    out_zp=0,
    weight_span=64,
):
    """Random ConvLayerSpec with self-consistent requant parameters."""
    weights = rng.integers(-weight_span, weight_span + 1, (cout, cin, k, k)).astype(
        np.int8
    )
    wsc = rng.uniform(0.005, 0.02, cout)
    biases = rng.integers(-2000, 2001, cout).astype(np.int32)
    mults = np.empty(cout, dtype=np.int64)
    shifts = np.empty(cout, dtype=np.int64)
    for oc in range(cout):
        mults[oc], shifts[oc] = quantize_multiplier(in_scale * wsc[oc] / out_scale)
    return ConvLayerSpec(
        in_channels=cin,
        out_channels=cout,
        kernel=(k, k),
        stride=stride,
        mode=mode,
        activation=activation,
        weights=weights,
        weight_scales=wsc,
        biases=biases,
        multipliers=mults,
        shifts=shifts,
        in_scale=in_scale,
        in_zero_point=in_zp,
        out_scale=out_scale,
        out_zero_point=out_zp,
    )


def random_tensor(rng, channels, h, w, scale=1.0, zero_point=0):
    return QuantTensor(
        data=rng.integers(-128, 128, (channels, h, w)).astype(np.int8),
        scale=scale,
        zero_point=zero_point,
    )


def conv_float_oracle(x: QuantTensor, layer: ConvLayerSpec) -> np.ndarray:
    """Double-precision reference: dequantize, convolve directly, quantize.

    Independent of the integer path: explicit patch sums for forward mode,
    kernel scattering for transposed mode; float bias; numpy rounding.
    Returns the quantized integer grid values (not a QuantTensor).
    """
    xr = x.dequantize()
    cin, h, w = xr.shape
    kh, kw = layer.kernel
    s = layer.stride
    wreal = layer.weights.astype(np.float64) * layer.weight_scales[
        :, None, None, None
    ]
    if layer.mode == "forward":
        oh, ow = -(-h // s), -(-w // s)
        ph, pw = max((oh - 1) * s + kh - h, 0), max((ow - 1) * s + kw - w, 0)
        xp = np.pad(xr, ((0, 0), (ph // 2, ph - ph // 2), (pw // 2, pw - pw // 2)))
        out = np.zeros((layer.out_channels, oh, ow))
        for oc in range(layer.out_channels):
            for i in range(oh):
                for j in range(ow):
                    out[oc, i, j] = np.sum(
                        xp[:, i * s : i * s + kh, j * s : j * s + kw] * wreal[oc]
                    )
    else:
        full = np.zeros((layer.out_channels, 2 * h + kh - 2, 2 * w + kw - 2))
        for oc in range(layer.out_channels):
            for ic in range(cin):
                for i in range(h):
                    for j in range(w):
                        full[oc, 2 * i : 2 * i + kh, 2 * j : 2 * j + kw] += (
                            xr[ic, i, j] * wreal[oc, ic]
                        )
        cb_h, cb_w = (kh - 2) // 2, (kw - 2) // 2
        out = full[:, cb_h : cb_h + 2 * h, cb_w : cb_w + 2 * w]
    out += (
        layer.biases[:, None, None]
        * (x.scale * layer.weight_scales)[:, None, None]
    )
    q = np.round(out / layer.out_scale) + layer.out_zero_point
    if layer.activation == "relu":
        q = np.maximum(q, layer.out_zero_point)
    return np.clip(q, -128, 127)
