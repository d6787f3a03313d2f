import io
import pathlib

import numpy as np
import pytest

from nvc import codec, container
from nvc.codec import FRAME_INTER, FRAME_INTRA
from nvc.container import (
    HEADER_SIZE,
    ContainerHeader,
    FrameRecord,
    read_stream,
    read_stream_bytes,
    write_stream,
)
from nvc.entropy import ScaleQuantParams, table_set
from nvc.errors import (
    FormatError,
    NvcError,
    ValidationError,
)
from nvc.weights import ModelWeights

GOLDEN = pathlib.Path(__file__).parent / "golden"


def _header(frame_count=0, gop=2, partitions=2):
    return ContainerHeader(
        width=64,
        height=64,
        display_width=60,
        display_height=50,
        gop_length=gop,
        partitions=partitions,
        frame_count=frame_count,
        scale_params=ScaleQuantParams(),
        weights_checksum=0x1234_5678_9ABC_DEF0,
    )


def _fake_record(frame_type, partitions=2, seed=0):
    rng = np.random.default_rng(seed)
    n = 2 if frame_type == FRAME_INTRA else 4
    streams = []
    for _ in range(n):
        seg = rng.bytes(int(rng.integers(6, 40)))
        header = (4 * partitions).to_bytes(4, "little")
        offs = [4 * partitions]
        # single non-empty segment in partition 0, empty partition 1
        header += (4 * partitions + len(seg)).to_bytes(4, "little")
        streams.append(header + seg + b"\x00" * 6)
    return FrameRecord(frame_type=frame_type, stream_bytes=tuple(streams))


def test_empty_stream_is_header_only():
    sink = io.BytesIO()
    n = write_stream(_header(0), [], sink)
    assert n == HEADER_SIZE == len(sink.getvalue())
    header, frames = read_stream(io.BytesIO(sink.getvalue()))
    assert list(frames) == []
    assert header.display_width == 60


def test_write_read_write_byte_identical():
    records = [
        _fake_record(FRAME_INTRA, seed=1),
        _fake_record(FRAME_INTER, seed=2),
        _fake_record(FRAME_INTRA, seed=3),
    ]
    sink = io.BytesIO()
    count = write_stream(_header(3), records, sink)
    raw = sink.getvalue()
    assert count == len(raw)
    assert count == HEADER_SIZE + sum(r.size for r in records)
    header, parsed = read_stream_bytes(raw)
    sink2 = io.BytesIO()
    write_stream(header, [FrameRecord(r.frame_type, r.stream_bytes) for r in parsed],
                 sink2)
    assert sink2.getvalue() == raw


def test_frame_offsets_enable_seeking():
    records = [_fake_record(FRAME_INTRA, seed=4), _fake_record(FRAME_INTER, seed=5)]
    sink = io.BytesIO()
    write_stream(_header(2), records, sink)
    _, parsed = read_stream_bytes(sink.getvalue())
    assert parsed[0].byte_offset == HEADER_SIZE
    assert parsed[1].byte_offset == HEADER_SIZE + parsed[0].size


def test_schedule_validation_on_write():
    with pytest.raises(ValidationError):
        write_stream(_header(1), [_fake_record(FRAME_INTER)], io.BytesIO())
    with pytest.raises(ValidationError):
        write_stream(
            _header(2),
            [_fake_record(FRAME_INTRA), _fake_record(FRAME_INTRA)],
            io.BytesIO(),
        )
    with pytest.raises(ValidationError):
        write_stream(_header(2), [_fake_record(FRAME_INTRA)], io.BytesIO())


def test_bad_magic_rejected():
    sink = io.BytesIO()
    write_stream(_header(0), [], sink)
    raw = bytearray(sink.getvalue())
    raw[0] = ord("X")
    with pytest.raises(FormatError):
        read_stream_bytes(bytes(raw))


def test_header_invariants_checked():
    with pytest.raises(ValidationError):
        ContainerHeader(
            width=100, height=64, display_width=60, display_height=50,
            gop_length=2, partitions=2, frame_count=0,
            scale_params=ScaleQuantParams(), weights_checksum=0,
        )
    with pytest.raises(ValidationError):
        ContainerHeader(
            width=64, height=64, display_width=70, display_height=50,
            gop_length=2, partitions=2, frame_count=0,
            scale_params=ScaleQuantParams(), weights_checksum=0,
        )


def test_truncation_at_every_byte_boundary():
    """Truncating a golden stream anywhere must yield the leading complete
    frames and then one typed error, never a crash."""
    raw = (GOLDEN / "tiny.nvcs").read_bytes()
    header, full = read_stream_bytes(raw)
    sizes = [r.size for r in full]
    for cut in range(len(raw)):
        got = []
        try:
            h, frames = read_stream(io.BytesIO(raw[:cut]))
            for rec in frames:
                got.append(rec)
        except NvcError:
            pass
        else:
            pytest.fail(f"truncation at {cut} bytes parsed fully")
        # frames before the cut still parse
        complete = 0
        offset = HEADER_SIZE
        for s in sizes:
            if cut >= offset + s:
                complete += 1
                offset += s
            else:
                break
        if cut >= HEADER_SIZE:
            assert len(got) == complete


def test_golden_stream_parses_and_decodes():
    raw = (GOLDEN / "tiny.nvcs").read_bytes()
    header, records = read_stream_bytes(raw)
    assert header.frame_count == 4
    assert (header.width, header.height) == (64, 64)
    assert (header.display_width, header.display_height) == (60, 50)
    weights = ModelWeights.load(GOLDEN / "tiny.nvcw")
    assert weights.checksum == header.weights_checksum
    cfg = weights.config
    tables = table_set(cfg.scale_params)
    payloads = [r.to_payload(header.partitions) for r in records]
    recons = codec.decode_frames(
        payloads, (header.height, header.width), cfg, weights, tables
    )
    assert len(recons) == 4
    assert all(r.shape == (3, 64, 64) for r in recons)


def test_golden_round_trip_bytes():
    raw = (GOLDEN / "tiny.nvcs").read_bytes()
    header, records = read_stream_bytes(raw)
    sink = io.BytesIO()
    write_stream(
        header,
        [FrameRecord(r.frame_type, r.stream_bytes) for r in records],
        sink,
    )
    assert sink.getvalue() == raw
