"""Frame encoding and decoding on the quantized codec graphs.

The intra path codes a frame as an image: analysis to a latent, a hyper
path whose decoded output predicts the per-element coding scale of that
latent, synthesis back to pixels.  The inter path first codes motion
(features of the previous reconstruction and the current frame are fused
into a motion latent, whose decoded form drives a synthesis stack that
predicts the current frame), then codes the prediction residual the same
way.

Everything downstream of the arithmetic decoder runs in deterministic
integer arithmetic, so the encoder reproduces the receiver's tensors
bit-exactly; the returned reconstruction IS what the decoder will output,
which the closed-loop tests assert frame by frame.

A frame payload is an ordered tuple of partitioned sub-streams:
intra frames (hyperlatent, latent), inter frames (motion hyperlatent,
motion latent, residual hyperlatent, residual latent) - each hyperlatent
first because its decode yields the tables for the latent that follows.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import FRAME_MULTIPLE, PIXEL_SCALE, PIXEL_ZERO_POINT, CodecConfig
from .entropy import NUM_TABLES, TableSet, rate_estimate
from .errors import ConfigError, StreamSyncError
from .partition import PartitionedPayload, decode_parallel, encode_parallel
from .qtensor import QuantTensor, add_q, concat_q, conv_q, requantize_q, sub_q
from .weights import ModelWeights

FRAME_INTRA = 0
FRAME_INTER = 1

INTRA_STREAMS = 2
INTER_STREAMS = 4


@dataclass(frozen=True)
class FramePayload:
    frame_type: int
    streams: tuple  # of PartitionedPayload

    def __post_init__(self):
        want = INTRA_STREAMS if self.frame_type == FRAME_INTRA else INTER_STREAMS
        if len(self.streams) != want:
            raise ConfigError(
                f"frame type {self.frame_type} carries {want} sub-streams, "
                f"got {len(self.streams)}"
            )

    def stream_bytes(self) -> tuple:
        return tuple(s.to_bytes() for s in self.streams)

    def total_bytes(self) -> int:
        return sum(len(b) for b in self.stream_bytes())


@dataclass
class DecoderState:
    """Reference frame shared by sender and receiver; reset per GoP."""

    prev_frame: Optional[QuantTensor] = None
    frame_index: int = 0

    def require_reference(self) -> QuantTensor:
        if self.prev_frame is None or self.frame_index < 1:
            raise StreamSyncError(
                "inter frame decoded without an intra reference (GoP desync)"
            )
        return self.prev_frame

    def advance(self, recon: QuantTensor):
        self.prev_frame = recon
        self.frame_index += 1

    def reset(self):
        self.prev_frame = None
        self.frame_index = 0


def _run(x: QuantTensor, specs) -> QuantTensor:
    for spec in specs:
        x = conv_q(x, spec)
    return x


def _check_frame(x: QuantTensor):
    if x.height % FRAME_MULTIPLE or x.width % FRAME_MULTIPLE:
        raise ConfigError(
            f"frame dims {x.height}x{x.width} must be multiples of "
            f"{FRAME_MULTIPLE}; pad before encoding"
        )
    if x.channels != 3:
        raise ConfigError(f"frames carry 3 channels, got {x.channels}")
    if (x.scale, x.zero_point) != (PIXEL_SCALE, PIXEL_ZERO_POINT):
        raise ConfigError("frames must be quantized onto the pixel grid")


def _scale_index_lut(scale: float, zero_point: int, params) -> np.ndarray:
    """Table index for each possible int8 value of a log-scale map.

    The hyper synthesis output IS the predicted log scale on its grid, so
    n = clamp(floor(gamma * (q - zp) * scale) + theta, 0, 255).
    """
    q = np.arange(-128, 128, dtype=np.float64)
    vals = np.floor(params.gamma * ((q - zero_point) * scale)) + params.theta
    return np.clip(vals, 0, NUM_TABLES - 1).astype(np.int64)


def _latent_table_indices(log_scale_map: QuantTensor, params) -> np.ndarray:
    lut = _scale_index_lut(log_scale_map.scale, log_scale_map.zero_point, params)
    return lut[log_scale_map.data.astype(np.int16).ravel() + 128]


def _prior_table_indices(prior: np.ndarray, h: int, w: int) -> np.ndarray:
    return np.repeat(np.asarray(prior, dtype=np.int64), h * w)


def _code_tensor(t: QuantTensor, indices, cfg, tables, workers) -> PartitionedPayload:
    return encode_parallel(
        t.data.ravel(), indices, tables, cfg.partitions, workers=workers
    )


def _decode_tensor(
    payload, indices, tables, shape, grid, workers
) -> QuantTensor:
    data = decode_parallel(payload, indices, tables, workers=workers)
    return QuantTensor(
        data=data.reshape(shape), scale=grid[0], zero_point=grid[1]
    )


def _code_hyper_branch(
    latent: QuantTensor,
    stream: str,
    cfg: CodecConfig,
    weights: ModelWeights,
    tables: TableSet,
    workers,
):
    """Code a latent's hyper path; returns (z payload, y payload, y tables)."""
    z = _run(latent, weights.specs(f"{stream}_hyper_analysis"))
    prior = _prior_table_indices(weights.prior_indices[stream], z.height, z.width)
    z_payload = _code_tensor(z, prior, cfg, tables, workers)
    log_scale = _run(z, weights.specs(f"{stream}_hyper_synthesis"))
    y_indices = _latent_table_indices(log_scale, cfg.scale_params)
    y_payload = _code_tensor(latent, y_indices, cfg, tables, workers)
    return z_payload, y_payload


def _decode_hyper_branch(
    z_payload,
    y_payload,
    stream: str,
    frame_hw: tuple,
    latent_channels: int,
    cfg: CodecConfig,
    weights: ModelWeights,
    tables: TableSet,
    workers,
) -> QuantTensor:
    h, w = frame_hw
    zh, zw = cfg.hyper_dims(h, w)
    lh, lw = cfg.latent_dims(h, w)
    prior = _prior_table_indices(weights.prior_indices[stream], zh, zw)
    z_grid = weights.out_grid(f"{stream}_hyper_analysis")
    z = _decode_tensor(
        z_payload, prior, tables, (cfg.hyper_channels(stream), zh, zw), z_grid, workers
    )
    log_scale = _run(z, weights.specs(f"{stream}_hyper_synthesis"))
    y_indices = _latent_table_indices(log_scale, cfg.scale_params)
    y_grid = weights.out_grid(
        {"intra": "intra_analysis", "motion": "motion_fusion",
         "residual": "residual_analysis"}[stream]
    )
    return _decode_tensor(
        y_payload, y_indices, tables, (latent_channels, lh, lw), y_grid, workers
    )


def intra_encode(
    x0: QuantTensor,
    cfg: CodecConfig,
    weights: ModelWeights,
    tables: TableSet,
    workers=None,
):
    """Encode a frame as an image; returns (payload, reconstruction).

    The reconstruction equals the receiver's output bit-exactly.
    """
    _check_frame(x0)
    y = _run(x0, weights.specs("intra_analysis"))
    z_payload, y_payload = _code_hyper_branch(
        y, "intra", cfg, weights, tables, workers
    )
    recon = _run(y, weights.specs("intra_synthesis"))
    return FramePayload(FRAME_INTRA, (z_payload, y_payload)), recon


def intra_decode(
    payload: FramePayload,
    frame_hw: tuple,
    cfg: CodecConfig,
    weights: ModelWeights,
    tables: TableSet,
    workers=None,
) -> QuantTensor:
    if payload.frame_type != FRAME_INTRA:
        raise StreamSyncError("expected an intra frame payload")
    y = _decode_hyper_branch(
        payload.streams[0],
        payload.streams[1],
        "intra",
        frame_hw,
        cfg.latent_channels,
        cfg,
        weights,
        tables,
        workers,
    )
    return _run(y, weights.specs("intra_synthesis"))


def _fuse(a: QuantTensor, b: QuantTensor, consumer: str, weights) -> QuantTensor:
    """Concatenate two feature maps on the consumer's input grid.

    Generated weights align these grids so the requantize steps are
    no-ops; hand-built weights with differing grids are moved onto the
    common grid first.
    """
    scale, zp = weights.input_grid(consumer)
    return concat_q(requantize_q(a, scale, zp), requantize_q(b, scale, zp))


def _predict_frame(
    prev_features: QuantTensor, motion_latent: QuantTensor, weights: ModelWeights
) -> QuantTensor:
    upsampled = _run(motion_latent, weights.specs("motion_synthesis_pre"))
    fused = _fuse(prev_features, upsampled, "motion_synthesis_post", weights)
    return _run(fused, weights.specs("motion_synthesis_post"))


def inter_encode(
    x_t: QuantTensor,
    state: DecoderState,
    cfg: CodecConfig,
    weights: ModelWeights,
    tables: TableSet,
    workers=None,
):
    """Encode a frame against the previous reconstruction.

    Motion is coded first; the encoder then rebuilds the receiver's
    prediction from the (losslessly) decoded motion latent, codes the
    residual, and returns the receiver's reconstruction.  Updates state.
    """
    _check_frame(x_t)
    prev = state.require_reference()
    if prev.shape != x_t.shape:
        raise ConfigError(
            f"frame shape {x_t.shape} does not match reference {prev.shape}"
        )
    f_prev = _run(prev, weights.specs("prev_features"))
    f_curr = _run(x_t, weights.specs("curr_features"))
    motion_latent = _run(
        _fuse(f_prev, f_curr, "motion_fusion", weights),
        weights.specs("motion_fusion"),
    )
    zm_payload, ym_payload = _code_hyper_branch(
        motion_latent, "motion", cfg, weights, tables, workers
    )
    predicted = _predict_frame(f_prev, motion_latent, weights)
    residual = sub_q(x_t, predicted, cfg.residual_scale, cfg.residual_zero_point)
    residual_latent = _run(residual, weights.specs("residual_analysis"))
    zr_payload, yr_payload = _code_hyper_branch(
        residual_latent, "residual", cfg, weights, tables, workers
    )
    residual_recon = _run(residual_latent, weights.specs("residual_synthesis"))
    recon = add_q(predicted, residual_recon, PIXEL_SCALE, PIXEL_ZERO_POINT)
    state.advance(recon)
    return (
        FramePayload(FRAME_INTER, (zm_payload, ym_payload, zr_payload, yr_payload)),
        recon,
    )


def inter_decode(
    payload: FramePayload,
    state: DecoderState,
    cfg: CodecConfig,
    weights: ModelWeights,
    tables: TableSet,
    workers=None,
) -> QuantTensor:
    """Decode an inter frame and update state; mirror of inter_encode."""
    if payload.frame_type != FRAME_INTER:
        raise StreamSyncError("expected an inter frame payload")
    prev = state.require_reference()
    frame_hw = (prev.height, prev.width)
    f_prev = _run(prev, weights.specs("prev_features"))
    motion_latent = _decode_hyper_branch(
        payload.streams[0],
        payload.streams[1],
        "motion",
        frame_hw,
        cfg.motion_latent_channels,
        cfg,
        weights,
        tables,
        workers,
    )
    predicted = _predict_frame(f_prev, motion_latent, weights)
    residual_latent = _decode_hyper_branch(
        payload.streams[2],
        payload.streams[3],
        "residual",
        frame_hw,
        cfg.residual_latent_channels,
        cfg,
        weights,
        tables,
        workers,
    )
    residual_recon = _run(residual_latent, weights.specs("residual_synthesis"))
    recon = add_q(predicted, residual_recon, PIXEL_SCALE, PIXEL_ZERO_POINT)
    state.advance(recon)
    return recon


def encode_frames(
    frames,
    cfg: CodecConfig,
    weights: ModelWeights,
    tables: TableSet,
    workers=None,
):
    """Encode a frame sequence on the GoP schedule.

    Returns (payloads, reconstructions); reconstruction i equals what the
    decoder will produce for frame i.
    """
    state = DecoderState()
    payloads = []
    recons = []
    for i, frame in enumerate(frames):
        if i % cfg.gop_length == 0:
            state.reset()
            payload, recon = intra_encode(frame, cfg, weights, tables, workers)
            state.advance(recon)
        else:
            payload, recon = inter_encode(frame, state, cfg, weights, tables, workers)
        payloads.append(payload)
        recons.append(recon)
    return payloads, recons


def decode_frames(
    payloads,
    frame_hw: tuple,
    cfg: CodecConfig,
    weights: ModelWeights,
    tables: TableSet,
    workers=None,
    start_index: int = 0,
):
    """Decode frame payloads; start_index must sit on a GoP boundary."""
    if start_index % cfg.gop_length:
        raise StreamSyncError(
            f"decode must start on a GoP boundary, not frame {start_index}"
        )
    state = DecoderState()
    recons = []
    for i, payload in enumerate(payloads, start=start_index):
        if i % cfg.gop_length == 0:
            state.reset()
            if payload.frame_type != FRAME_INTRA:
                raise StreamSyncError(f"frame {i} must be intra (GoP start)")
            recon = intra_decode(payload, frame_hw, cfg, weights, tables, workers)
            state.advance(recon)
        else:
            if payload.frame_type != FRAME_INTER:
                raise StreamSyncError(f"frame {i} must be inter")
            recon = inter_decode(payload, state, cfg, weights, tables, workers)
        recons.append(recon)
    return recons


def payload_rate_estimate(
    frame: QuantTensor, cfg: CodecConfig, weights: ModelWeights, tables: TableSet
) -> float:
    """Ideal intra-frame bit count (latent + hyperlatent); for reporting."""
    y = _run(frame, weights.specs("intra_analysis"))
    z = _run(y, weights.specs("intra_hyper_analysis"))
    prior = _prior_table_indices(weights.prior_indices["intra"], z.height, z.width)
    log_scale = _run(z, weights.specs("intra_hyper_synthesis"))
    y_idx = _latent_table_indices(log_scale, cfg.scale_params)
    return rate_estimate(y.data.ravel(), y_idx, tables) + rate_estimate(
        z.data.ravel(), prior, tables
    )
