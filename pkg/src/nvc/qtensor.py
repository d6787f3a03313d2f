"""Deterministic fixed-point tensor arithmetic for the codec graphs.

All operations consume and produce QuantTensors (int8 data plus an affine
grid) and are bit-exact across platforms: products and sums are integer
arithmetic, and the only "float" step - the BLAS matmul inside the
convolution - operates on integer-valued doubles whose partial sums stay
far below 2**53, so every intermediate is exactly representable and the
result equals the pure-integer computation regardless of summation order.

Rounding conventions (fixed project-wide so encoder and decoder stay in
bit-exact sync):

* convolution requantization and grid requantization: round half up in
  the integer domain, i.e. (acc*mult + (1 << (shift-1))) >> shift
* elementwise add/subtract: round half away from zero on a fixed-point
  path with 20 guard bits
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GraphError

ACC_GUARD_LIMIT = (1 << 31) - 1  # kernel taps * in_channels * 127^2 must fit
_GUARD_BITS = 20
_BLOCK_ELEMS = 6_000_000  # float64 im2col tile budget (~48 MB)


@dataclass(frozen=True)
class QuantTensor:
    """int8 tensor in (channels, height, width) layout with an affine grid.

    Dequantized value of element e is (e - zero_point) * scale; treat
    instances as immutable (data is marked read-only).
    """

    data: np.ndarray
    scale: float
    zero_point: int

    def __post_init__(self):
        if self.data.dtype != np.int8 or self.data.ndim != 3:
            raise ConfigError("QuantTensor data must be int8 with shape (C, H, W)")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ConfigError(f"scale must be positive, got {self.scale}")
        if not -128 <= int(self.zero_point) <= 127:
            raise ConfigError(f"zero_point {self.zero_point} not in int8 range")
        d = np.ascontiguousarray(self.data)
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def dequantize(self) -> np.ndarray:
        return (self.data.astype(np.float64) - float(self.zero_point)) * self.scale

    def with_data(self, data: np.ndarray) -> "QuantTensor":
        return QuantTensor(data=data, scale=self.scale, zero_point=self.zero_point)


def quantize_array(values: np.ndarray, scale: float, zero_point: int) -> QuantTensor:
    """Quantize real values onto a grid (round half away from zero, saturate)."""
    v = np.asarray(values, dtype=np.float64) / scale
    q = np.sign(v) * np.floor(np.abs(v) + 0.5) + zero_point
    return QuantTensor(
        data=np.clip(q, -128, 127).astype(np.int8),
        scale=scale,
        zero_point=zero_point,
    )


def quantize_multiplier(ratio: float) -> tuple:
    """Fixed-point encoding of a positive real ratio as (mult, shift).

    mult is a 31-bit integer in [2^30, 2^31) and ratio ~= mult * 2^-shift
    with relative error below 2^-30.
    """
    if not (math.isfinite(ratio) and ratio > 0):
        raise ConfigError(f"requant ratio must be positive, got {ratio}")
    mant, exp = math.frexp(ratio)
    mult = round(mant * (1 << 31))
    if mult == 1 << 31:
        mult >>= 1
        exp += 1
    shift = 31 - exp
    if shift < 0:
        raise ConfigError(f"requant ratio {ratio} too large for a 31-bit multiplier")
    if shift > 62:
        raise ConfigError(f"requant ratio {ratio} too small to represent")
    return mult, shift


def _shift_half_up(prod: np.ndarray, shift) -> np.ndarray:
    """(prod + 2^(shift-1)) >> shift elementwise; shift 0 passes through."""
    shift = np.asarray(shift, dtype=np.int64)
    half = np.where(shift > 0, np.int64(1) << np.maximum(shift - 1, 0), np.int64(0))
    return (prod + half) >> shift


def _shift_half_away(prod: np.ndarray, shift: int) -> np.ndarray:
    if shift <= 0:
        return prod << (-shift)
    half = np.int64(1) << (shift - 1)
    mag = (np.abs(prod) + half) >> shift
    return np.where(prod < 0, -mag, mag)


@dataclass(frozen=True)
class ConvLayerSpec:
    """A quantized convolution layer: architecture, parameters, requant.

    weights are stored (out_channels, in_channels, kh, kw); biases live in
    the 32-bit accumulator domain; multipliers/shifts requantize each
    output channel onto the (out_scale, out_zero_point) grid.
    """

    in_channels: int
    out_channels: int
    kernel: tuple
    stride: int
    mode: str  # "forward" | "transposed"
    activation: str  # "relu" | "none"
    weights: np.ndarray
    weight_scales: np.ndarray
    biases: np.ndarray
    multipliers: np.ndarray
    shifts: np.ndarray
    in_scale: float
    in_zero_point: int
    out_scale: float
    out_zero_point: int

    def __post_init__(self):
        kh, kw = self.kernel
        if self.mode not in ("forward", "transposed"):
            raise ConfigError(f"unknown conv mode {self.mode!r}")
        if self.activation not in ("relu", "none"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.stride not in (1, 2):
            raise ConfigError(f"stride must be 1 or 2, got {self.stride}")
        if self.mode == "transposed" and self.stride != 2:
            raise ConfigError("transposed convolutions are stride-2 upsamplers")
        if self.weights.shape != (self.out_channels, self.in_channels, kh, kw):
            raise ConfigError(
                f"weights shape {self.weights.shape} does not match layer "
                f"({self.out_channels},{self.in_channels},{kh},{kw})"
            )
        if self.weights.dtype != np.int8:
            raise ConfigError("weights must be int8")
        for name in ("weight_scales", "biases", "multipliers", "shifts"):
            if len(getattr(self, name)) != self.out_channels:
                raise ConfigError(f"{name} must have one entry per output channel")
        if np.any(self.multipliers < 0) or np.any(self.multipliers >= 1 << 31):
            raise ConfigError("requant multipliers must be 31-bit non-negative")
        if np.any((self.shifts < 1) | (self.shifts > 62)):
            raise ConfigError("requant shifts must lie in [1, 62]")
        if kh * kw * self.in_channels * 127 * 127 > ACC_GUARD_LIMIT:
            raise ConfigError(
                "accumulator guard violated: kernel taps * in_channels too large "
                "for 32-bit accumulation"
            )

    @property
    def param_count(self) -> int:
        kh, kw = self.kernel
        return self.out_channels * self.in_channels * kh * kw + self.out_channels


def _correlate_exact(
    padded: np.ndarray, weights: np.ndarray, stride: int
) -> np.ndarray:
    """Exact integer cross-correlation of a zero-padded centered input.

    padded: int16 (Cin, Hp, Wp); weights: (Cout, Cin, kh, kw).  Runs as a
    tiled float64 matmul; every partial sum is an integer below 2**53 so
    the result is exact.
    """
    cout, cin, kh, kw = weights.shape
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]
    _, ho, wo, _, _ = windows.shape
    wmat = weights.reshape(cout, cin * kh * kw).astype(np.float64)
    out = np.empty((cout, ho, wo), dtype=np.int64)
    rows_per_block = max(1, _BLOCK_ELEMS // max(1, cin * kh * kw * wo))
    for r0 in range(0, ho, rows_per_block):
        r1 = min(ho, r0 + rows_per_block)
        block = windows[:, r0:r1]  # (Cin, nr, Wo, kh, kw)
        col = (
            block.transpose(0, 3, 4, 1, 2)
            .reshape(cin * kh * kw, (r1 - r0) * wo)
            .astype(np.float64)
        )
        out[:, r0:r1] = (wmat @ col).reshape(cout, r1 - r0, wo).astype(np.int64)
    return out


def _forward_accumulate(centered: np.ndarray, layer: ConvLayerSpec) -> np.ndarray:
    kh, kw = layer.kernel
    s = layer.stride
    _, h, w = centered.shape
    oh = -(-h // s)
    ow = -(-w // s)
    pad_h = max((oh - 1) * s + kh - h, 0)
    pad_w = max((ow - 1) * s + kw - w, 0)
    padded = np.pad(
        centered,
        ((0, 0), (pad_h // 2, pad_h - pad_h // 2), (pad_w // 2, pad_w - pad_w // 2)),
    )
    return _correlate_exact(padded, layer.weights, s)


def _phase_taps(k: int, crop_begin: int, phase: int) -> tuple:
    """Kernel taps and input offsets for one parity of transposed output.

    out[2u + phase] = sum_d x[u + d] * w[crop_begin + phase - 2d] over taps
    that stay inside the kernel.
    """
    d_min = math.ceil((crop_begin + phase - (k - 1)) / 2)
    d_max = (crop_begin + phase) // 2
    taps = [crop_begin + phase - 2 * d for d in range(d_min, d_max + 1)]
    return d_min, d_max, taps


def _transposed_accumulate(centered: np.ndarray, layer: ConvLayerSpec) -> np.ndarray:
    """Stride-2 transposed convolution decomposed into four phase convs.

    Equivalent to zero-stuffing the input and running a stride-1
    convolution, but skips the three quarters of products that hit
    stuffed zeros.
    """
    kh, kw = layer.kernel
    _, h, w = centered.shape
    crop_h = (kh - 2) // 2
    crop_w = (kw - 2) // 2
    out = np.empty((layer.out_channels, 2 * h, 2 * w), dtype=np.int64)
    for ph in (0, 1):
        rmin, rmax, rtaps = _phase_taps(kh, crop_h, ph)
        for pw in (0, 1):
            cmin, cmax, ctaps = _phase_taps(kw, crop_w, pw)
            sub = layer.weights[:, :, rtaps][:, :, :, ctaps]
            padded = np.pad(
                centered,
                ((0, 0), (max(0, -rmin), max(0, rmax)), (max(0, -cmin), max(0, cmax))),
            )
            out[:, ph::2, pw::2] = _correlate_exact(padded, sub, 1)
    return out


def conv_q(x: QuantTensor, layer: ConvLayerSpec) -> QuantTensor:
    """Quantized (transposed) convolution with per-channel requantization.

    Forward mode zero-pads symmetrically (in the quantized domain the pad
    value is the zero point) so output dims are ceil(in/stride);
    transposed mode produces exactly 2x the input dims.
    """
    if x.channels != layer.in_channels:
        raise ConfigError(
            f"input has {x.channels} channels, layer expects {layer.in_channels}"
        )
    if x.zero_point != layer.in_zero_point or not math.isclose(
        x.scale, layer.in_scale, rel_tol=1e-12
    ):
        raise ConfigError(
            f"input grid ({x.scale}, {x.zero_point}) does not match layer input "
            f"grid ({layer.in_scale}, {layer.in_zero_point})"
        )
    if x.height < 1 or x.width < 1:
        raise ConfigError("input spatial dims must be at least 1x1")
    centered = x.data.astype(np.int16) - np.int16(x.zero_point)
    if layer.mode == "forward":
        acc = _forward_accumulate(centered, layer)
    else:
        acc = _transposed_accumulate(centered, layer)
    acc += layer.biases.astype(np.int64)[:, None, None]
    prod = acc * layer.multipliers.astype(np.int64)[:, None, None]
    vals = _shift_half_up(prod, layer.shifts.astype(np.int64)[:, None, None])
    vals += np.int64(layer.out_zero_point)
    if layer.activation == "relu":
        vals = np.maximum(vals, np.int64(layer.out_zero_point))
    data = np.clip(vals, -128, 127).astype(np.int8)
    return QuantTensor(data=data, scale=layer.out_scale, zero_point=layer.out_zero_point)


def concat_q(a: QuantTensor, b: QuantTensor) -> QuantTensor:
    """Channel concatenation; both inputs must share spatial dims and grid."""
    if a.data.shape[1:] != b.data.shape[1:]:
        raise GraphError(
            f"concat spatial mismatch: {a.data.shape[1:]} vs {b.data.shape[1:]}"
        )
    if a.scale != b.scale or a.zero_point != b.zero_point:
        raise GraphError(
            f"concat grid mismatch: ({a.scale}, {a.zero_point}) vs "
            f"({b.scale}, {b.zero_point}); requantize to a common grid first"
        )
    return QuantTensor(
        data=np.concatenate([a.data, b.data], axis=0),
        scale=a.scale,
        zero_point=a.zero_point,
    )


def _add_like(a: QuantTensor, b: QuantTensor, out_scale, out_zero_point, sign):
    if a.data.shape != b.data.shape:
        raise GraphError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    ma, sa = quantize_multiplier(a.scale / out_scale)
    mb, sb = quantize_multiplier(b.scale / out_scale)
    ta = _shift_half_away(
        (a.data.astype(np.int64) - a.zero_point) * ma, sa - _GUARD_BITS
    )
    tb = _shift_half_away(
        (b.data.astype(np.int64) - b.zero_point) * mb, sb - _GUARD_BITS
    )
    total = ta + sign * tb
    vals = _shift_half_away(total, _GUARD_BITS) + np.int64(out_zero_point)
    return QuantTensor(
        data=np.clip(vals, -128, 127).astype(np.int8),
        scale=out_scale,
        zero_point=out_zero_point,
    )


def add_q(a: QuantTensor, b: QuantTensor, out_scale: float, out_zero_point: int) -> QuantTensor:
    """Elementwise dequantize-add-requantize with saturation."""
    return _add_like(a, b, out_scale, out_zero_point, 1)


def sub_q(a: QuantTensor, b: QuantTensor, out_scale: float, out_zero_point: int) -> QuantTensor:
    """Elementwise dequantize-subtract-requantize with saturation."""
    return _add_like(a, b, out_scale, out_zero_point, -1)


def requantize_q(x: QuantTensor, out_scale: float, out_zero_point: int) -> QuantTensor:
    """Move a tensor onto another grid (round half up, saturate)."""
    if x.scale == out_scale and x.zero_point == out_zero_point:
        return x
    mult, shift = quantize_multiplier(x.scale / out_scale)
    prod = (x.data.astype(np.int64) - x.zero_point) * mult
    vals = _shift_half_up(prod, shift) + np.int64(out_zero_point)
    return QuantTensor(
        data=np.clip(vals, -128, 127).astype(np.int8),
        scale=out_scale,
        zero_point=out_zero_point,
    )
