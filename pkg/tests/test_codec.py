import numpy as np
import pytest

from nvc.codec import (
    FRAME_INTER,
    FRAME_INTRA,
    DecoderState,
    decode_frames,
    encode_frames,
    inter_decode,
    inter_encode,
    intra_decode,
    intra_encode,
    payload_rate_estimate,
)
from nvc.config import PIXEL_SCALE, PIXEL_ZERO_POINT
from nvc.errors import ConfigError, StreamSyncError, TruncatedStreamError
from nvc.partition import PartitionedPayload
from nvc.qtensor import QuantTensor
from nvc.weights import LayerParams, ModelWeights, generate_weights


def _noise_frame(rng, h=128, w=128):
    return QuantTensor(
        (rng.integers(0, 256, (3, h, w)) - 128).astype(np.int8),
        PIXEL_SCALE,
        PIXEL_ZERO_POINT,
    )


def test_intra_round_trip_seed42(small_config, small_weights, tables):
    rng = np.random.default_rng(42)
    x = _noise_frame(rng)
    payload, recon_enc = intra_encode(x, small_config, small_weights, tables)
    assert payload.frame_type == FRAME_INTRA
    recon_dec = intra_decode(payload, (128, 128), small_config, small_weights, tables)
    assert np.array_equal(recon_enc.data, recon_dec.data)
    assert recon_enc.scale == PIXEL_SCALE
    assert recon_enc.zero_point == PIXEL_ZERO_POINT


def test_intra_rejects_unpadded_dims(small_config, small_weights, tables):
    rng = np.random.default_rng(0)
    with pytest.raises(ConfigError):
        intra_encode(_noise_frame(rng, 100, 128), small_config, small_weights, tables)


def test_intra_payload_matches_rate_estimate(small_config, small_weights, tables):
    rng = np.random.default_rng(1)
    x = _noise_frame(rng)
    payload, _ = intra_encode(x, small_config, small_weights, tables)
    est_bits = payload_rate_estimate(x, small_config, small_weights, tables)
    # payload bytes = segments + entry headers + per-partition flush slack
    p = small_config.partitions
    overhead_bits = 8 * (4 * p + 6 * p) * 2
    actual_bits = 8 * payload.total_bytes()
    assert actual_bits <= est_bits + overhead_bits
    assert actual_bits >= est_bits * 0.95


def test_zero_weights_degenerate_network(small_config, tables):
    base = generate_weights(small_config, seed=0)
    layers = {
        name: tuple(
            LayerParams(
                weights=np.zeros_like(p.weights),
                weight_scales=p.weight_scales,
                biases=np.zeros_like(p.biases),
                multipliers=p.multipliers,
                shifts=p.shifts,
                out_scale=p.out_scale,
                out_zero_point=p.out_zero_point,
            )
            for p in blocks
        )
        for name, blocks in base.layers.items()
    }
    zero = ModelWeights(
        config=base.config, layers=layers, prior_indices=base.prior_indices
    )
    rng = np.random.default_rng(2)
    x = _noise_frame(rng)
    payload, recon = intra_encode(x, small_config, zero, tables)
    # latents collapse to the zero point; reconstruction is constant
    assert len(np.unique(recon.data)) == 1
    again = intra_decode(payload, (128, 128), small_config, zero, tables)
    assert np.array_equal(recon.data, again.data)


def test_inter_three_frame_closed_loop_seed7(small_config, tables):
    weights = generate_weights(small_config, seed=7)
    rng = np.random.default_rng(7)
    frames = [_noise_frame(rng) for _ in range(3)]
    payloads, enc_recons = encode_frames(frames, small_config, weights, tables)
    assert [p.frame_type for p in payloads] == [FRAME_INTRA, FRAME_INTER, FRAME_INTER]
    dec_recons = decode_frames(payloads, (128, 128), small_config, weights, tables)
    for a, b in zip(enc_recons, dec_recons):
        assert np.array_equal(a.data, b.data)


def test_inter_static_scene_well_defined(small_config, small_weights, tables):
    rng = np.random.default_rng(3)
    x = _noise_frame(rng)
    state = DecoderState()
    _, recon0 = intra_encode(x, small_config, small_weights, tables)
    state.advance(recon0)
    # feed the reconstruction itself as the next frame
    payload, recon1 = inter_encode(
        recon0, state, small_config, small_weights, tables
    )
    assert payload.frame_type == FRAME_INTER
    check = DecoderState()
    check.advance(recon0)
    recon1_dec = inter_decode(payload, check, small_config, small_weights, tables)
    assert np.array_equal(recon1.data, recon1_dec.data)


def test_inter_payload_bit_accounting(small_config, small_weights, tables):
    rng = np.random.default_rng(4)
    frames = [_noise_frame(rng) for _ in range(2)]
    payloads, _ = encode_frames(frames, small_config, small_weights, tables)
    inter = payloads[1]
    p = small_config.partitions
    total_bits = 8 * inter.total_bytes()
    segment_bits = 8 * sum(
        sum(len(s.segment(i)) for i in range(p)) for s in inter.streams
    )
    assert total_bits == segment_bits + 4 * p * 8 * 4


def test_inter_without_reference_rejected(small_config, small_weights, tables):
    rng = np.random.default_rng(5)
    with pytest.raises(StreamSyncError):
        inter_encode(
            _noise_frame(rng), DecoderState(), small_config, small_weights, tables
        )


def test_decode_out_of_order_rejected(small_config, small_weights, tables):
    rng = np.random.default_rng(6)
    frames = [_noise_frame(rng) for _ in range(2)]
    payloads, _ = encode_frames(frames, small_config, small_weights, tables)
    with pytest.raises(StreamSyncError):
        decode_frames(
            [payloads[1], payloads[0]], (128, 128), small_config, small_weights,
            tables
        )
    with pytest.raises(StreamSyncError):
        intra_decode(payloads[1], (128, 128), small_config, small_weights, tables)
    with pytest.raises(StreamSyncError):
        decode_frames(payloads, (128, 128), small_config, small_weights, tables,
                      start_index=1)


def test_corrupted_hyper_stream_is_typed_error(small_config, small_weights, tables):
    rng = np.random.default_rng(8)
    payload, _ = intra_encode(
        _noise_frame(rng), small_config, small_weights, tables
    )
    z = payload.streams[0]
    truncated = PartitionedPayload(
        entry_offsets=z.entry_offsets, body=z.body[: len(z.body) // 2]
    )
    broken = type(payload)(payload.frame_type, (truncated, payload.streams[1]))
    with pytest.raises(TruncatedStreamError):
        intra_decode(broken, (128, 128), small_config, small_weights, tables)


def test_misaligned_feature_grids_are_requantized(small_config, tables):
    """Weights whose current-feature grid differs from the previous-feature
    grid must still close the loop: the graph requantizes to the fusion
    input grid on both sides."""
    import dataclasses

    base = generate_weights(small_config, seed=11)
    layers = dict(base.layers)
    last = layers["curr_features"][-1]
    layers["curr_features"] = layers["curr_features"][:-1] + (
        dataclasses.replace(last, out_scale=last.out_scale * 1.7,
                            out_zero_point=3),
    )
    skewed = ModelWeights(
        config=base.config, layers=layers, prior_indices=base.prior_indices
    )
    assert not skewed.grid_aligned()
    rng = np.random.default_rng(12)
    frames = [_noise_frame(rng, 64, 64) for _ in range(2)]
    payloads, enc = encode_frames(frames, small_config, skewed, tables)
    dec = decode_frames(payloads, (64, 64), small_config, skewed, tables)
    for a, b in zip(enc, dec):
        assert np.array_equal(a.data, b.data)


def test_latent_dims_follow_downsampling(small_config, small_weights, tables):
    from nvc.codec import _run

    rng = np.random.default_rng(9)
    x = _noise_frame(rng, 192, 128)
    y = _run(x, small_weights.specs("intra_analysis"))
    assert (y.height, y.width) == (192 // 16, 128 // 16)
    z = _run(y, small_weights.specs("intra_hyper_analysis"))
    assert (z.height, z.width) == (192 // 64, 128 // 64)


def test_gop_schedule(small_config, small_weights, tables):
    rng = np.random.default_rng(10)
    frames = [_noise_frame(rng, 64, 64) for _ in range(6)]
    payloads, _ = encode_frames(frames, small_config, small_weights, tables)
    types = [p.frame_type for p in payloads]
    # gop_length == 4
    assert types == [
        FRAME_INTRA, FRAME_INTER, FRAME_INTER, FRAME_INTER, FRAME_INTRA,
        FRAME_INTER,
    ]
