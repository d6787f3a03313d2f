"""Partitioned entropy coding with entry-point headers.

A latent tensor's flattened symbol stream is split into P contiguous,
ceil-balanced chunks that are arithmetic-coded independently.  The coded
payload starts with P little-endian u32 byte offsets (entry points) so a
decoder can hand each segment to a separate worker.  Output bytes are
identical no matter how many workers run, which the test suite checks by
comparing against the serial path.
"""

import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .entropy import TableSet, ac_decode, ac_encode
from .errors import DomainError, TruncatedStreamError, ValidationError

WORKERS_ENV = "NVC_WORKERS"


def resolve_workers(workers=None) -> int:
    """Worker count: explicit argument, else NVC_WORKERS, else 1."""
    if workers is None:
        workers = os.environ.get(WORKERS_ENV, "1")
    workers = int(workers)
    if workers < 1:
        raise DomainError(f"worker count must be >= 1, got {workers}")
    return workers


@dataclass(frozen=True)
class PartitionPlan:
    total_symbols: int
    boundaries: tuple  # P+1 non-decreasing offsets, first 0, last total

    @property
    def num_partitions(self) -> int:
        return len(self.boundaries) - 1

    def chunk(self, i: int) -> tuple:
        return self.boundaries[i], self.boundaries[i + 1]

    def sizes(self) -> tuple:
        return tuple(
            self.boundaries[i + 1] - self.boundaries[i]
            for i in range(self.num_partitions)
        )


def plan_partitions(total_symbols: int, num_partitions: int) -> PartitionPlan:
    """Ceil-balanced contiguous chunks: sizes differ by at most one.

    The first total % P chunks take the ceiling size; P may exceed the
    symbol count, leaving empty trailing chunks.
    """
    if num_partitions < 1:
        raise DomainError(f"partition count must be >= 1, got {num_partitions}")
    if total_symbols < 0:
        raise DomainError("total_symbols must be >= 0")
    base, extra = divmod(total_symbols, num_partitions)
    bounds = [0]
    for i in range(num_partitions):
        bounds.append(bounds[-1] + base + (1 if i < extra else 0))
    return PartitionPlan(total_symbols=total_symbols, boundaries=tuple(bounds))


@dataclass(frozen=True)
class PartitionedPayload:
    """Entry-point header plus concatenated per-partition segments.

    entry_offsets are byte offsets relative to the payload start;
    entry_offsets[0] equals the header length 4*P.  Segment i spans
    [offsets[i], offsets[i+1]) with the last segment running to the end.
    """

    entry_offsets: tuple
    body: bytes

    @property
    def num_partitions(self) -> int:
        return len(self.entry_offsets)

    def segment(self, i: int) -> bytes:
        header = 4 * self.num_partitions
        start = self.entry_offsets[i] - header
        end = (
            self.entry_offsets[i + 1] - header
            if i + 1 < self.num_partitions
            else len(self.body)
        )
        return self.body[start:end]

    def to_bytes(self) -> bytes:
        return (
            struct.pack(f"<{self.num_partitions}I", *self.entry_offsets) + self.body
        )

    @classmethod
    def from_bytes(cls, data: bytes, num_partitions: int) -> "PartitionedPayload":
        header = 4 * num_partitions
        if len(data) < header:
            raise TruncatedStreamError(
                f"payload shorter than its {header}-byte entry-point header"
            )
        offsets = struct.unpack_from(f"<{num_partitions}I", data, 0)
        if offsets[0] != header:
            raise ValidationError(
                f"entry offset 0 is {offsets[0]}, expected header length {header}"
            )
        prev = offsets[0]
        for i, off in enumerate(offsets[1:], start=1):
            if off < prev:
                raise ValidationError(f"entry offset {i} decreases ({off} < {prev})")
            prev = off
        if prev > len(data):
            raise ValidationError(
                f"entry offset {num_partitions - 1} ({prev}) exceeds payload size "
                f"{len(data)}"
            )
        return cls(entry_offsets=offsets, body=bytes(data[header:]))


def _encode_chunk(args):
    symbols, indices, tables = args
    if len(symbols) == 0:
        return b""
    return ac_encode(symbols, indices, tables)


def encode_parallel(
    symbols, table_indices, tables: TableSet, num_partitions: int, workers=None
) -> PartitionedPayload:
    """Encode a symbol stream as P independent segments plus entry points.

    Zero-symbol chunks produce zero-length segments.  The byte output is a
    pure function of (symbols, table_indices, tables, P).
    """
    symbols = np.asarray(symbols, dtype=np.int8)
    table_indices = np.asarray(table_indices)
    if symbols.shape != table_indices.shape:
        raise DomainError("symbols and table indices must have equal length")
    plan = plan_partitions(len(symbols), num_partitions)
    jobs = [
        (symbols[a:b], table_indices[a:b], tables)
        for a, b in (plan.chunk(i) for i in range(plan.num_partitions))
    ]
    workers = resolve_workers(workers)
    if workers == 1:
        segments = [_encode_chunk(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            segments = list(pool.map(_encode_chunk, jobs))
    offsets = [4 * num_partitions]
    for seg in segments[:-1]:
        offsets.append(offsets[-1] + len(seg))
    return PartitionedPayload(entry_offsets=tuple(offsets), body=b"".join(segments))


def _decode_chunk(args):
    segment, count, indices, tables, part_id = args
    if count == 0:
        return np.empty(0, dtype=np.int8)
    try:
        return ac_decode(segment, count, indices, tables)
    except TruncatedStreamError as exc:
        raise TruncatedStreamError(f"partition {part_id}: {exc}") from exc


def decode_parallel(
    payload: PartitionedPayload, table_indices, tables: TableSet, workers=None
) -> np.ndarray:
    """Decode all partitions; result is independent of worker scheduling.

    table_indices covers the full symbol stream and is chunked with the
    same ceil rule the encoder used, so the symbol count per partition is
    implied rather than transmitted.
    """
    table_indices = np.asarray(table_indices)
    plan = plan_partitions(len(table_indices), payload.num_partitions)
    jobs = []
    for i in range(plan.num_partitions):
        a, b = plan.chunk(i)
        jobs.append((payload.segment(i), b - a, table_indices[a:b], tables, i))
    workers = resolve_workers(workers)
    if workers == 1:
        parts = [_decode_chunk(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_decode_chunk, jobs))
    if not parts:
        return np.empty(0, dtype=np.int8)
    return np.concatenate(parts)
