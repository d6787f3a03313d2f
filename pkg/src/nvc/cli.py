"""Command-line surface: encode, decode, metrics, report, gen-weights,
plus bench / dump-tables / init-config utilities.

Every failure class exits nonzero with a one-line diagnostic; the worker
count for partition coding comes from NVC_WORKERS unless a command says
otherwise.
"""

import argparse
import json
import math
import sys
import time

import numpy as np

from . import codec, container, video
from .complexity import count_complexity
from .config import CodecConfig, default_config
from .entropy import ScaleQuantParams, ac_decode, ac_encode, table_set
from .errors import DomainError, NvcError, ValidationError
from .metrics import MetricsRow, bits_per_pixel, ms_ssim, psnr
from .weights import ModelWeights, generate_weights


def _load_config(path) -> CodecConfig:
    if path is None:
        return default_config()
    with open(path, "r", encoding="utf-8") as f:
        return CodecConfig.from_json(f.read())


def _load_video(args) -> video.RawVideo:
    return video.read_frames(args.input, width=args.width, height=args.height)


def _percentile(values, q: float) -> float:
    if not values:
        return 0.0
    ordered = sorted(values)
    idx = min(len(ordered) - 1, max(0, math.ceil(q * len(ordered)) - 1))
    return ordered[idx]


def cmd_encode(args) -> int:
    weights = ModelWeights.load(args.weights)
    cfg = weights.config.with_overrides(
        gop_length=args.gop, partitions=args.partitions
    )
    raw = _load_video(args)
    display_h, display_w = raw.height, raw.width
    tables = table_set(cfg.scale_params)
    frames = [
        video.frame_to_tensor(video.pad_to_multiple(f)) for f in raw.frames
    ]
    payloads, _ = codec.encode_frames(frames, cfg, weights, tables)
    records = [container.FrameRecord.from_payload(p) for p in payloads]
    header = container.ContainerHeader(
        width=frames[0].width,
        height=frames[0].height,
        display_width=display_w,
        display_height=display_h,
        gop_length=cfg.gop_length,
        partitions=cfg.partitions,
        frame_count=len(records),
        scale_params=cfg.scale_params,
        weights_checksum=weights.checksum,
    )
    with open(args.output, "wb") as f:
        total = container.write_stream(header, records, f)
    payload_bits = 8 * sum(r.size for r in records)
    bpp = bits_per_pixel(payload_bits, display_w, display_h, len(records))
    print(
        f"encoded {len(records)} frames ({display_w}x{display_h}) -> "
        f"{total} bytes, {bpp:.4f} bpp"
    )
    return 0


def cmd_decode(args) -> int:
    weights = ModelWeights.load(args.weights)
    with open(args.input, "rb") as f:
        header, records = container.read_stream(f)
        records = list(records)
    if header.weights_checksum != weights.checksum:
        raise ValidationError(
            "stream was encoded with different weights "
            f"(stream {header.weights_checksum:#x}, file {weights.checksum:#x})"
        )
    cfg = weights.config.with_overrides(
        gop_length=header.gop_length, partitions=header.partitions
    )
    tables = table_set(cfg.scale_params)
    state = codec.DecoderState()
    frames = []
    times_ms = []
    for i, rec in enumerate(records):
        payload = rec.to_payload(header.partitions)
        t0 = time.perf_counter()
        if i % cfg.gop_length == 0:
            state.reset()
            recon = codec.intra_decode(
                payload, (header.height, header.width), cfg, weights, tables
            )
            state.advance(recon)
        else:
            recon = codec.inter_decode(payload, state, cfg, weights, tables)
        times_ms.append(1000.0 * (time.perf_counter() - t0))
        frames.append(
            video.crop_to_display(
                video.tensor_to_frame(recon), header.display_height,
                header.display_width
            )
        )
    video.write_frames(args.output, video.RawVideo(frames=frames))
    print(f"decoded {len(frames)} frames to {args.output}")
    if args.time:
        mean = sum(times_ms) / len(times_ms) if times_ms else 0.0
        print(
            f"decode time per frame: mean {mean:.1f} ms, "
            f"p95 {_percentile(times_ms, 0.95):.1f} ms"
        )
    return 0


def cmd_metrics(args) -> int:
    ref = video.read_frames(args.ref, width=args.width, height=args.height)
    test = video.read_frames(args.test, width=args.width, height=args.height)
    if len(ref) != len(test):
        raise ValidationError(
            f"frame counts differ: ref {len(ref)}, test {len(test)}"
        )
    psnr_vals = [psnr(a, b) for a, b in zip(ref.frames, test.frames)]
    try:
        ssim_vals = [ms_ssim(a, b) for a, b in zip(ref.frames, test.frames)]
        ssim_mean = sum(ssim_vals) / len(ssim_vals)
    except DomainError as exc:
        print(f"ms-ssim unavailable: {exc}", file=sys.stderr)
        ssim_mean = float("nan")
    bpp = 0.0
    if args.stream:
        with open(args.stream, "rb") as f:
            header, records = container.read_stream(f)
            payload_bits = 8 * sum(r.size for r in records)
        bpp = bits_per_pixel(
            payload_bits, header.display_width, header.display_height,
            header.frame_count
        )
    row = MetricsRow(
        ms_ssim=ssim_mean,
        psnr_db=sum(psnr_vals) / len(psnr_vals),
        bpp=bpp,
        frames=len(ref),
        decode_ms=args.decode_ms,
    )
    print(MetricsRow.HEADER)
    print(row.as_tsv())
    return 0


def cmd_report(args) -> int:
    cfg = _load_config(args.config)
    report = count_complexity(cfg, frame_h=args.height, frame_w=args.width)
    print(report.format_table())
    return 0


def cmd_gen_weights(args) -> int:
    cfg = _load_config(args.config)
    weights = generate_weights(cfg, args.seed)
    weights.save(args.output)
    print(
        f"wrote {args.output} (seed {args.seed}, checksum "
        f"{weights.checksum:#018x})"
    )
    return 0


def cmd_init_config(args) -> int:
    cfg = default_config()
    doc = json.loads(cfg.to_json())
    with open(args.output, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote {args.output}")
    return 0


def cmd_dump_tables(args) -> int:
    params = ScaleQuantParams(gamma=args.gamma, theta=args.theta)
    with open(args.output, "wb") as f:
        f.write(table_set(params).dump())
    print(f"wrote {args.output} (256 tables x 257 u32)")
    return 0


def run_benchmark(cfg, seed, frame_h, frame_w, n_frames, entropy_symbols,
                  out=sys.stdout):
    """Throughput report: entropy decode MB/s and end-to-end frames/s.

    Informational only; figures depend entirely on the host machine.
    """
    tables = table_set(cfg.scale_params)
    rng = np.random.default_rng(seed)

    masses = tables.masses()[180].astype(np.float64)
    symbols = rng.choice(
        np.arange(-128, 128), size=entropy_symbols, p=masses / masses.sum()
    ).astype(np.int8)
    indices = np.full(entropy_symbols, 180, dtype=np.int64)
    payload = ac_encode(symbols, indices, tables)
    t0 = time.perf_counter()
    ac_decode(payload, entropy_symbols, indices, tables)
    dt = time.perf_counter() - t0
    mb_s = len(payload) / dt / 1e6
    sym_s = entropy_symbols / dt / 1e6
    print(
        f"entropy decode: {len(payload)} bytes in {dt:.2f} s -> "
        f"{mb_s:.2f} MB/s ({sym_s:.2f} Msym/s)",
        file=out,
    )

    weights = generate_weights(cfg, seed)
    frames = [
        video.frame_to_tensor(
            rng.integers(0, 256, (frame_h, frame_w, 3), dtype=np.uint8)
        )
        for _ in range(n_frames)
    ]
    t0 = time.perf_counter()
    payloads, _ = codec.encode_frames(frames, cfg, weights, tables)
    enc_dt = time.perf_counter() - t0
    t0 = time.perf_counter()
    codec.decode_frames(payloads, (frame_h, frame_w), cfg, weights, tables)
    dec_dt = time.perf_counter() - t0
    print(
        f"end-to-end at {frame_w}x{frame_h}: encode {n_frames / enc_dt:.3f} "
        f"frames/s, decode {n_frames / dec_dt:.3f} frames/s "
        f"({n_frames} frames)",
        file=out,
    )
    return {
        "entropy_mb_s": mb_s,
        "encode_fps": n_frames / enc_dt,
        "decode_fps": n_frames / dec_dt,
    }


def cmd_bench(args) -> int:
    cfg = _load_config(args.config)
    run_benchmark(
        cfg,
        seed=args.seed,
        frame_h=args.height,
        frame_w=args.width,
        n_frames=args.frames,
        entropy_symbols=args.entropy_symbols,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nvc", description="integer-deterministic neural video codec"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode frames into a bitstream")
    p.add_argument("--input", required=True, help="PPM directory/file or raw RGB24")
    p.add_argument("--width", type=int, help="frame width (raw input)")
    p.add_argument("--height", type=int, help="frame height (raw input)")
    p.add_argument("--weights", required=True)
    p.add_argument("--gop", type=int, default=None, help="GoP length override")
    p.add_argument("--partitions", type=int, default=None,
                   help="entropy partition count override")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a bitstream to frames")
    p.add_argument("--input", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--output", required=True, help="directory or .rgb file")
    p.add_argument("--time", action="store_true",
                   help="report per-frame reconstruction time")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("metrics", help="quality metrics between two videos")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--stream", help="bitstream file for bpp accounting")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--decode-ms", type=float, default=0.0,
                   help="decode time to report in the Time column")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("report", help="parameter/MAC complexity report")
    p.add_argument("--config", help="config JSON (default architecture if omitted)")
    p.add_argument("--width", type=int, default=1280)
    p.add_argument("--height", type=int, default=768)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gen-weights", help="generate deterministic test weights")
    p.add_argument("--config", help="config JSON (default architecture if omitted)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_gen_weights)

    p = sub.add_parser("init-config", help="write the default config as JSON")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_init_config)

    p = sub.add_parser("dump-tables", help="dump CDF tables for debugging")
    p.add_argument("--output", required=True)
    p.add_argument("--gamma", type=float, default=32.0)
    p.add_argument("--theta", type=int, default=70)
    p.set_defaults(func=cmd_dump_tables)

    p = sub.add_parser("bench", help="throughput report (informational)")
    p.add_argument("--config", help="config JSON (default architecture if omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=1280)
    p.add_argument("--height", type=int, default=768)
    p.add_argument("--frames", type=int, default=2)
    p.add_argument("--entropy-symbols", type=int, default=2_000_000)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NvcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
