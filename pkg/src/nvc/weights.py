"""Quantized model parameters: generation, binding, and the weights file.

Trained parameters are out of scope for this artifact, so weights are
produced by a seeded generator (numpy PCG64, so the same (config, seed)
yields identical bytes on every platform).  The generator picks per-layer
activation grids and per-channel requantization so that activations keep
a healthy dynamic range through random stacks instead of saturating or
collapsing to the zero point.

File format (full byte layout in docs/bitstream.md):

    magic "MNVC" | version u16 | u32 config length | canonical config JSON
    per layer, in SUBNET_ORDER: weights i8, biases i32 LE,
        weight scales f64 LE, multipliers i32 LE, shifts u8,
        out_scale f64 LE, out_zero_point i8
    per prior stream (intra, motion, residual): hyper-channel count u16,
        table index u8 each
    checksum u64 LE (first 8 bytes of SHA-256 over everything above)
"""

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .config import (
    PIXEL_SCALE,
    PIXEL_ZERO_POINT,
    PRIOR_STREAMS,
    SUBNET_ORDER,
    CodecConfig,
)
from .errors import ConfigError, FormatError, TruncatedStreamError, ValidationError
from .qtensor import ConvLayerSpec, quantize_multiplier

WEIGHTS_MAGIC = b"MNVC"
WEIGHTS_VERSION = 1

_LOG_SIGMA_SCALE = 0.02  # grid step of the predicted log-scale maps
_BASE_WEIGHT_SCALE = 0.01
_WEIGHT_SPAN = 64  # generated int8 weights are uniform in [-span, span]
_TARGET_STD = 40.0  # aimed-for std of activations in the integer domain


@dataclass(frozen=True)
class LayerParams:
    """Quantized parameter block for one convolution layer."""

    weights: np.ndarray  # int8 (out, in, kh, kw)
    weight_scales: np.ndarray  # f64 (out,)
    biases: np.ndarray  # i32 (out,)
    multipliers: np.ndarray  # i64 values < 2^31 (out,)
    shifts: np.ndarray  # u8 (out,)
    out_scale: float
    out_zero_point: int


class ModelWeights:
    """All parameter blocks for a CodecConfig plus hyperlatent priors."""

    def __init__(self, config: CodecConfig, layers: dict, prior_indices: dict,
                 version: int = WEIGHTS_VERSION):
        self.config = config
        self.version = version
        self.layers = layers
        self.prior_indices = prior_indices
        self._spec_cache = {}
        for name in SUBNET_ORDER:
            if len(layers.get(name, ())) != len(config.subnets[name]):
                raise ConfigError(f"parameter blocks for {name} do not match config")
        for stream in PRIOR_STREAMS:
            prior = prior_indices[stream]
            if len(prior) != config.hyper_channels(stream):
                raise ConfigError(f"{stream} prior must cover every hyper channel")
            if np.any((prior < 0) | (prior > 255)):
                raise ConfigError("prior table indices must lie in [0, 255]")
        self.checksum = _checksum(self._serialize_head())

    # -- grid wiring --------------------------------------------------------
    def out_grid(self, name: str) -> tuple:
        p = self.layers[name][-1]
        return p.out_scale, p.out_zero_point

    def input_grid(self, name: str) -> tuple:
        cfg = self.config
        pixel = (PIXEL_SCALE, PIXEL_ZERO_POINT)
        wiring = {
            "intra_analysis": lambda: pixel,
            "prev_features": lambda: pixel,
            "curr_features": lambda: pixel,
            "intra_hyper_analysis": lambda: self.out_grid("intra_analysis"),
            "intra_hyper_synthesis": lambda: self.out_grid("intra_hyper_analysis"),
            "intra_synthesis": lambda: self.out_grid("intra_analysis"),
            "motion_fusion": lambda: self.out_grid("prev_features"),
            "motion_hyper_analysis": lambda: self.out_grid("motion_fusion"),
            "motion_hyper_synthesis": lambda: self.out_grid("motion_hyper_analysis"),
            "motion_synthesis_pre": lambda: self.out_grid("motion_fusion"),
            "motion_synthesis_post": lambda: self.out_grid("prev_features"),
            "residual_analysis": lambda: (
                cfg.residual_scale,
                cfg.residual_zero_point,
            ),
            "residual_hyper_analysis": lambda: self.out_grid("residual_analysis"),
            "residual_hyper_synthesis": lambda: self.out_grid(
                "residual_hyper_analysis"
            ),
            "residual_synthesis": lambda: self.out_grid("residual_analysis"),
        }
        return wiring[name]()

    def specs(self, name: str) -> tuple:
        """Executable ConvLayerSpecs for one sub-network (cached)."""
        if name not in self._spec_cache:
            defs = self.config.subnets[name]
            params = self.layers[name]
            scale, zp = self.input_grid(name)
            specs = []
            for d, p in zip(defs, params):
                specs.append(
                    ConvLayerSpec(
                        in_channels=d.in_channels,
                        out_channels=d.out_channels,
                        kernel=d.kernel,
                        stride=d.stride,
                        mode=d.mode,
                        activation=d.activation,
                        weights=p.weights,
                        weight_scales=p.weight_scales,
                        biases=p.biases,
                        multipliers=p.multipliers,
                        shifts=p.shifts,
                        in_scale=scale,
                        in_zero_point=zp,
                        out_scale=p.out_scale,
                        out_zero_point=p.out_zero_point,
                    )
                )
                scale, zp = p.out_scale, p.out_zero_point
            self._spec_cache[name] = tuple(specs)
        return self._spec_cache[name]

    def grid_aligned(self) -> bool:
        """Concat inputs must share a grid; the generator guarantees it."""
        return (
            self.out_grid("curr_features") == self.out_grid("prev_features")
            and self.out_grid("motion_synthesis_pre") == self.out_grid("prev_features")
        )

    # -- serialization ------------------------------------------------------
    def _serialize_head(self) -> bytes:
        out = bytearray()
        out += WEIGHTS_MAGIC
        out += struct.pack("<H", self.version)
        cfg_json = self.config.to_json().encode("utf-8")
        out += struct.pack("<I", len(cfg_json))
        out += cfg_json
        for name in SUBNET_ORDER:
            for p in self.layers[name]:
                out += p.weights.tobytes()
                out += p.biases.astype("<i4").tobytes()
                out += p.weight_scales.astype("<f8").tobytes()
                out += p.multipliers.astype("<i4").tobytes()
                out += p.shifts.astype("u1").tobytes()
                out += struct.pack("<d", p.out_scale)
                out += struct.pack("<b", p.out_zero_point)
        for stream in PRIOR_STREAMS:
            prior = np.asarray(self.prior_indices[stream], dtype="u1")
            out += struct.pack("<H", len(prior))
            out += prior.tobytes()
        return bytes(out)

    def to_bytes(self) -> bytes:
        head = self._serialize_head()
        return head + struct.pack("<Q", self.checksum)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ModelWeights":
        r = _Reader(data)
        if r.take(4) != WEIGHTS_MAGIC:
            raise FormatError("bad weights magic")
        (version,) = struct.unpack("<H", r.take(2))
        if version != WEIGHTS_VERSION:
            raise FormatError(f"unsupported weights version {version}")
        (cfg_len,) = struct.unpack("<I", r.take(4))
        config = CodecConfig.from_json(r.take(cfg_len).decode("utf-8"))
        layers = {}
        for name in SUBNET_ORDER:
            blocks = []
            for d in config.subnets[name]:
                co, ci = d.out_channels, d.in_channels
                kh, kw = d.kernel
                w = np.frombuffer(r.take(co * ci * kh * kw), dtype=np.int8).reshape(
                    co, ci, kh, kw
                )
                biases = np.frombuffer(r.take(4 * co), dtype="<i4").astype(np.int32)
                wsc = np.frombuffer(r.take(8 * co), dtype="<f8").astype(np.float64)
                mult = np.frombuffer(r.take(4 * co), dtype="<i4").astype(np.int64)
                shifts = np.frombuffer(r.take(co), dtype="u1").astype(np.int64)
                (out_scale,) = struct.unpack("<d", r.take(8))
                (out_zp,) = struct.unpack("<b", r.take(1))
                blocks.append(
                    LayerParams(
                        weights=w.copy(),
                        weight_scales=wsc,
                        biases=biases,
                        multipliers=mult,
                        shifts=shifts,
                        out_scale=out_scale,
                        out_zero_point=out_zp,
                    )
                )
            layers[name] = tuple(blocks)
        priors = {}
        for stream in PRIOR_STREAMS:
            (count,) = struct.unpack("<H", r.take(2))
            priors[stream] = np.frombuffer(r.take(count), dtype="u1").astype(np.int64)
        (stored,) = struct.unpack("<Q", r.take(8))
        model = cls(config=config, layers=layers, prior_indices=priors,
                    version=version)
        if model.checksum != stored:
            raise ValidationError(
                f"weights checksum mismatch: stored {stored:#x}, "
                f"computed {model.checksum:#x}"
            )
        return model

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ModelWeights":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedStreamError(
                f"weights data ends at byte {len(self.data)}, "
                f"needed {self.pos + n}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def _checksum(blob: bytes) -> int:
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


def generate_weights(config: CodecConfig, seed: int) -> ModelWeights:
    """Deterministic pseudo-random parameters for testing and demos.

    PRNG is numpy's PCG64; the draw order is fixed by SUBNET_ORDER, so the
    same (config, seed) reproduces identical weights everywhere.  Grids
    that feed a concatenation are forced equal, synthesis outputs land on
    the pixel/residual grids, and requantization gains are derived from a
    fan-in noise model so activations stay inside the 8-bit range.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    pixel = (PIXEL_SCALE, PIXEL_ZERO_POINT)
    residual = (config.residual_scale, config.residual_zero_point)
    log_sigma = (_LOG_SIGMA_SCALE, 0)

    out_grids = {}

    def prescribed_grid(name: str, layer_index: int, last: bool):
        if not last:
            return None
        if name in ("intra_synthesis", "motion_synthesis_post"):
            return pixel
        if name == "residual_synthesis":
            return residual
        if name.endswith("hyper_synthesis"):
            return log_sigma
        if name in ("curr_features", "motion_synthesis_pre"):
            return out_grids["prev_features"]
        return None

    input_stds = {
        "intra_analysis": 74.0,
        "prev_features": 74.0,
        "curr_features": 74.0,
        "residual_analysis": 50.0,
    }

    layers = {}
    # prev_features first: other stacks are pinned to its output grid
    gen_order = ["prev_features"] + [n for n in SUBNET_ORDER if n != "prev_features"]

    def current_input_grid(name):
        wiring = {
            "intra_analysis": pixel,
            "prev_features": pixel,
            "curr_features": pixel,
            "intra_hyper_analysis": out_grids.get("intra_analysis"),
            "intra_hyper_synthesis": out_grids.get("intra_hyper_analysis"),
            "intra_synthesis": out_grids.get("intra_analysis"),
            "motion_fusion": out_grids.get("prev_features"),
            "motion_hyper_analysis": out_grids.get("motion_fusion"),
            "motion_hyper_synthesis": out_grids.get("motion_hyper_analysis"),
            "motion_synthesis_pre": out_grids.get("motion_fusion"),
            "motion_synthesis_post": out_grids.get("prev_features"),
            "residual_analysis": residual,
            "residual_hyper_analysis": out_grids.get("residual_analysis"),
            "residual_hyper_synthesis": out_grids.get("residual_hyper_analysis"),
            "residual_synthesis": out_grids.get("residual_analysis"),
        }
        grid = wiring[name]
        if grid is None:
            raise ConfigError(f"generation order broke grid wiring at {name}")
        return grid

    w_var = _WEIGHT_SPAN * _WEIGHT_SPAN / 3.0

    for name in gen_order:
        in_scale, in_zp = current_input_grid(name)
        in_std = input_stds.get(name, _TARGET_STD)
        blocks = []
        defs = config.subnets[name]
        for i, d in enumerate(defs):
            kh, kw = d.kernel
            co, ci = d.out_channels, d.in_channels
            w = rng.integers(-_WEIGHT_SPAN, _WEIGHT_SPAN + 1, (co, ci, kh, kw))
            fan_in = ci * kh * kw
            acc_std = np.sqrt(fan_in * w_var) * in_std
            last = i == len(defs) - 1
            # drive the log-scale heads harder so table indices spread out
            target = 2.0 * _TARGET_STD if (last and name.endswith("hyper_synthesis")) else _TARGET_STD
            gain = target / acc_std
            jitter = rng.uniform(0.9, 1.1, co)
            fixed = prescribed_grid(name, i, last)
            if fixed is not None:
                out_scale, out_zp = fixed
                wsc = gain * jitter * out_scale / in_scale
            else:
                wsc = _BASE_WEIGHT_SCALE * jitter
                out_scale = in_scale * _BASE_WEIGHT_SCALE / gain
                out_zp = 0
            mults = np.empty(co, dtype=np.int64)
            shifts = np.empty(co, dtype=np.int64)
            for oc in range(co):
                mults[oc], shifts[oc] = quantize_multiplier(
                    in_scale * wsc[oc] / out_scale
                )
            bias_bound = max(1, round(6.0 / gain))
            biases = rng.integers(-bias_bound, bias_bound + 1, co, dtype=np.int64)
            blocks.append(
                LayerParams(
                    weights=w.astype(np.int8),
                    weight_scales=wsc,
                    biases=biases.astype(np.int32),
                    multipliers=mults,
                    shifts=shifts,
                    out_scale=float(out_scale),
                    out_zero_point=int(out_zp),
                )
            )
            in_scale, in_zp = blocks[-1].out_scale, blocks[-1].out_zero_point
            # ReLU keeps the positive half: rms drops to ~0.707 of the target
            in_std = _TARGET_STD * (0.707 if d.activation == "relu" else 1.0)
        layers[name] = tuple(blocks)
        out_grids[name] = (blocks[-1].out_scale, blocks[-1].out_zero_point)

    priors = {
        stream: rng.integers(40, 221, config.hyper_channels(stream), dtype=np.int64)
        for stream in PRIOR_STREAMS
    }
    return ModelWeights(config=config, layers=layers, prior_indices=priors)
