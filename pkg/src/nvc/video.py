"""Frame I/O, padding and cropping.

Frames are 8-bit RGB, held as numpy uint8 arrays of shape (H, W, 3).
Two on-disk forms are supported, both bit-exact in any language:

* PPM (P6, maxval 255), one file per frame;
* a single raw RGB24 stream (frames back to back) with explicit
  --width/--height.
"""

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PIXEL_SCALE, PIXEL_ZERO_POINT
from .errors import DomainError, FormatError, ValidationError
from .qtensor import QuantTensor


@dataclass
class RawVideo:
    """A frame sequence with uniform dimensions; frame rate is metadata only."""

    frames: list = field(default_factory=list)
    frame_rate: float = 30.0

    def __post_init__(self):
        for f in self.frames:
            if f.dtype != np.uint8 or f.ndim != 3 or f.shape[2] != 3:
                raise ValidationError("frames must be uint8 (H, W, 3) RGB")
            if f.shape[:2] != self.frames[0].shape[:2]:
                raise ValidationError("all frames must share dimensions")

    @property
    def height(self) -> int:
        return self.frames[0].shape[0]

    @property
    def width(self) -> int:
        return self.frames[0].shape[1]

    def __len__(self) -> int:
        return len(self.frames)


def pad_to_multiple(frame: np.ndarray, m: int = 64) -> np.ndarray:
    """Pad right/bottom by edge replication to the next multiples of m."""
    if m < 1:
        raise DomainError("padding multiple must be >= 1")
    h, w = frame.shape[:2]
    ph = (-h) % m
    pw = (-w) % m
    if ph == 0 and pw == 0:
        return frame
    return np.pad(frame, ((0, ph), (0, pw), (0, 0)), mode="edge")


def crop_to_display(frame: np.ndarray, display_h: int, display_w: int) -> np.ndarray:
    """Exact top-left crop; inverse of pad_to_multiple on the display region."""
    h, w = frame.shape[:2]
    if display_h > h or display_w > w:
        raise DomainError(
            f"display dims {display_h}x{display_w} exceed frame {h}x{w}"
        )
    return frame[:display_h, :display_w]


def frame_to_tensor(frame: np.ndarray) -> QuantTensor:
    """uint8 (H, W, 3) -> pixel-grid QuantTensor (3, H, W)."""
    data = (frame.astype(np.int16) - 128).astype(np.int8).transpose(2, 0, 1)
    return QuantTensor(data=data, scale=PIXEL_SCALE, zero_point=PIXEL_ZERO_POINT)


def tensor_to_frame(t: QuantTensor) -> np.ndarray:
    """Pixel-grid QuantTensor -> uint8 (H, W, 3)."""
    if (t.scale, t.zero_point) != (PIXEL_SCALE, PIXEL_ZERO_POINT):
        raise DomainError("tensor is not on the pixel grid")
    return (t.data.astype(np.int16) + 128).astype(np.uint8).transpose(1, 2, 0)


# -- PPM ------------------------------------------------------------------

def write_ppm(path, frame: np.ndarray):
    h, w = frame.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(frame).tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    # header: magic, width, height, maxval, separated by whitespace/comments
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = re.compile(rb"\s*(#[^\n]*\n)*\s*(\S+)").match(data, pos)
        if not m:
            raise FormatError(f"{path}: malformed PPM header")
        tokens.append(m.group(2))
        pos = m.end()
    if tokens[0] != b"P6":
        raise FormatError(f"{path}: not a binary PPM (P6) file")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise FormatError(f"{path}: bad PPM header") from exc
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    need = w * h * 3
    raw = data[pos : pos + need]
    if len(raw) != need:
        raise FormatError(f"{path}: pixel data truncated")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)


# -- directory / raw stream I/O --------------------------------------------

def read_frames(path, width=None, height=None) -> RawVideo:
    """Load a video: a directory of .ppm files, a single .ppm, or raw RGB24."""
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("*.ppm"))
        if not files:
            raise FormatError(f"{path}: no .ppm frames found")
        return RawVideo(frames=[read_ppm(f) for f in files])
    if p.suffix.lower() == ".ppm":
        return RawVideo(frames=[read_ppm(p)])
    if width is None or height is None:
        raise DomainError("raw RGB24 input needs --width and --height")
    data = p.read_bytes()
    frame_size = width * height * 3
    if frame_size == 0 or len(data) % frame_size:
        raise FormatError(
            f"{path}: size {len(data)} is not a multiple of {frame_size} "
            f"({width}x{height} RGB24 frames)"
        )
    n = len(data) // frame_size
    arr = np.frombuffer(data, dtype=np.uint8).reshape(n, height, width, 3)
    return RawVideo(frames=[arr[i] for i in range(n)])


def write_frames(path, video: RawVideo):
    """Write frames: to a directory as frame_%05d.ppm, or to one raw file."""
    p = Path(path)
    if p.suffix.lower() in (".rgb", ".raw"):
        with open(p, "wb") as f:
            for frame in video.frames:
                f.write(np.ascontiguousarray(frame).tobytes())
        return
    p.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(video.frames):
        write_ppm(p / f"frame_{i:05d}.ppm", frame)
