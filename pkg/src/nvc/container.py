"""The on-disk bitstream: global header plus per-frame records.

Layout (all integers little-endian, fixed width; byte-exact description
in docs/bitstream.md):

    header (38 bytes):
        magic   8s   "MNVCSTRM"
        version u16
        width, height            u16  padded dims, multiples of 64
        display_width/height     u16  pre-padding dims
        gop_length u16 | partitions u16 | frame_count u32
        gamma   u16  fixed point, 8 fraction bits
        theta   i16
        weights_checksum u64
    frame record:
        frame_type u8 (0 intra / 1 inter)
        sub-stream byte lengths, u32 each (2 for intra, 4 for inter)
        sub-stream payloads (PartitionedPayload bytes)

The GoP schedule is implied by gop_length; the type byte is kept as a
redundancy check.  The parser never reads past declared lengths and
reports every malformed input as a typed error - it is the fuzz target.
"""

import io
import struct
from dataclasses import dataclass

from .codec import FRAME_INTER, FRAME_INTRA, FramePayload
from .entropy import ScaleQuantParams
from .errors import (
    FormatError,
    TruncatedStreamError,
    ValidationError,
)
from .partition import PartitionedPayload

STREAM_MAGIC = b"MNVCSTRM"
STREAM_VERSION = 1

_HEADER = struct.Struct("<8sHHHHHHHIHhQ")
HEADER_SIZE = _HEADER.size

_STREAMS_PER_TYPE = {FRAME_INTRA: 2, FRAME_INTER: 4}


@dataclass(frozen=True)
class ContainerHeader:
    width: int  # padded
    height: int  # padded
    display_width: int
    display_height: int
    gop_length: int
    partitions: int
    frame_count: int
    scale_params: ScaleQuantParams
    weights_checksum: int
    version: int = STREAM_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("width", "height", "display_width", "display_height",
                     "gop_length", "partitions"):
            v = getattr(self, name)
            if not 0 <= v <= 0xFFFF:
                raise ValidationError(f"{name} {v} does not fit u16")
        if not 0 <= self.frame_count <= 0xFFFFFFFF:
            raise ValidationError(f"frame_count {self.frame_count} does not fit u32")
        if self.width % 64 or self.height % 64:
            raise ValidationError(
                f"padded dims {self.width}x{self.height} must be multiples of 64"
            )
        if self.display_width > self.width or self.display_height > self.height:
            raise ValidationError("display dims exceed padded dims")
        if self.display_width < 1 or self.display_height < 1:
            raise ValidationError("display dims must be positive")
        if self.gop_length < 1:
            raise ValidationError("GoP length must be >= 1")
        if self.partitions < 1:
            raise ValidationError("partition count must be >= 1")
        if self.frame_count < 0:
            raise ValidationError("negative frame count")

    def pack(self) -> bytes:
        return _HEADER.pack(
            STREAM_MAGIC,
            self.version,
            self.width,
            self.height,
            self.display_width,
            self.display_height,
            self.gop_length,
            self.partitions,
            self.frame_count,
            self.scale_params.gamma_fixed,
            self.scale_params.theta,
            self.weights_checksum,
        )

    @classmethod
    def unpack(cls, data: bytes) -> "ContainerHeader":
        if len(data) < HEADER_SIZE:
            raise TruncatedStreamError(
                f"header needs {HEADER_SIZE} bytes, got {len(data)}"
            )
        (
            magic,
            version,
            width,
            height,
            disp_w,
            disp_h,
            gop,
            parts,
            frames,
            gamma_fp,
            theta,
            checksum,
        ) = _HEADER.unpack_from(data, 0)
        if magic != STREAM_MAGIC:
            raise FormatError(f"bad stream magic {magic!r}")
        if version != STREAM_VERSION:
            raise FormatError(f"unsupported stream version {version}")
        if gamma_fp == 0:
            raise ValidationError("gamma field must be positive")
        return cls(
            width=width,
            height=height,
            display_width=disp_w,
            display_height=disp_h,
            gop_length=gop,
            partitions=parts,
            frame_count=frames,
            scale_params=ScaleQuantParams(gamma=gamma_fp / 256.0, theta=theta),
            weights_checksum=checksum,
            version=version,
        )


@dataclass(frozen=True)
class FrameRecord:
    """One frame's coded payload as stored in the container."""

    frame_type: int
    stream_bytes: tuple  # raw PartitionedPayload bytes per sub-stream
    byte_offset: int = -1  # where the record starts in the file (when read)

    def __post_init__(self):
        want = _STREAMS_PER_TYPE.get(self.frame_type)
        if want is None:
            raise ValidationError(f"unknown frame type {self.frame_type}")
        if len(self.stream_bytes) != want:
            raise ValidationError(
                f"frame type {self.frame_type} carries {want} sub-streams, "
                f"got {len(self.stream_bytes)}"
            )

    @property
    def size(self) -> int:
        return 1 + 4 * len(self.stream_bytes) + sum(
            len(b) for b in self.stream_bytes
        )

    def pack(self) -> bytes:
        out = bytearray([self.frame_type])
        for b in self.stream_bytes:
            out += struct.pack("<I", len(b))
        for b in self.stream_bytes:
            out += b
        return bytes(out)

    @classmethod
    def from_payload(cls, payload: FramePayload) -> "FrameRecord":
        return cls(
            frame_type=payload.frame_type, stream_bytes=payload.stream_bytes()
        )

    def to_payload(self, partitions: int) -> FramePayload:
        streams = tuple(
            PartitionedPayload.from_bytes(b, partitions) for b in self.stream_bytes
        )
        return FramePayload(frame_type=self.frame_type, streams=streams)


def write_stream(header: ContainerHeader, frames, sink) -> int:
    """Write header + frame records; returns the byte count.

    Validates the schedule: record count matches the header and each GoP
    starts with an intra frame.
    """
    frames = list(frames)
    if len(frames) != header.frame_count:
        raise ValidationError(
            f"header declares {header.frame_count} frames, got {len(frames)}"
        )
    for i, rec in enumerate(frames):
        want = FRAME_INTRA if i % header.gop_length == 0 else FRAME_INTER
        if rec.frame_type != want:
            raise ValidationError(
                f"frame {i} must be {'intra' if want == FRAME_INTRA else 'inter'}"
            )
    count = 0
    data = header.pack()
    sink.write(data)
    count += len(data)
    for rec in frames:
        data = rec.pack()
        sink.write(data)
        count += len(data)
    return count


def _read_exact(source, n: int, what: str) -> bytes:
    data = source.read(n)
    if len(data) != n:
        raise TruncatedStreamError(
            f"stream truncated reading {what}: wanted {n} bytes, got {len(data)}"
        )
    return data


def read_stream(source):
    """Parse (header, frame-record iterator) from a binary stream.

    Records are validated before being yielded; errors name the frame
    index.  The iterator is lazy, so a truncated file yields all complete
    frames before raising.
    """
    header = ContainerHeader.unpack(_read_exact(source, HEADER_SIZE, "header"))

    def frames():
        offset = HEADER_SIZE
        for i in range(header.frame_count):
            try:
                (ftype,) = _read_exact(source, 1, f"frame {i} type")
                n_streams = _STREAMS_PER_TYPE.get(ftype)
                if n_streams is None:
                    raise ValidationError(f"frame {i}: unknown frame type {ftype}")
                want = FRAME_INTRA if i % header.gop_length == 0 else FRAME_INTER
                if ftype != want:
                    raise ValidationError(
                        f"frame {i}: type {ftype} breaks the GoP schedule"
                    )
                lengths = struct.unpack(
                    f"<{n_streams}I", _read_exact(source, 4 * n_streams,
                                                  f"frame {i} lengths")
                )
                min_len = 4 * header.partitions
                blobs = []
                for j, ln in enumerate(lengths):
                    if ln < min_len:
                        raise ValidationError(
                            f"frame {i} sub-stream {j}: length {ln} below the "
                            f"{min_len}-byte entry-point header"
                        )
                    blobs.append(_read_exact(source, ln, f"frame {i} sub-stream {j}"))
            except TruncatedStreamError as exc:
                raise TruncatedStreamError(f"frame {i}: {exc}") from exc
            rec = FrameRecord(
                frame_type=ftype, stream_bytes=tuple(blobs), byte_offset=offset
            )
            offset += rec.size
            yield rec

    return header, frames()


def read_stream_bytes(data: bytes):
    """read_stream over an in-memory buffer; returns (header, list of records)."""
    header, it = read_stream(io.BytesIO(data))
    return header, list(it)
