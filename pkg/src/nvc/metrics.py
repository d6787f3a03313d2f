"""Quality metrics: PSNR, multi-scale SSIM, and the reporting row.

PSNR is computed in RGB over all channels against a 255 peak, capped at
99.0 dB for identical inputs.

MS-SSIM follows the standard 5-scale construction: an 11x11 Gaussian
window with sigma 1.5, per-scale contrast-structure terms and a final
luminance term combined with exponents (0.0448, 0.2856, 0.3001, 0.2363,
0.1333).  Filtering pads symmetrically (so 160x160 inputs survive all
five scales) and each scale downsamples by 2x2 mean pooling.  The score
is computed per channel and averaged.  Negative contrast terms are
clamped to zero before exponentiation.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

PSNR_CAP_DB = 99.0

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_WINDOW_SIZE = 11
_WINDOW_SIGMA = 1.5
_C1 = (0.01 * 255.0) ** 2
_C2 = (0.03 * 255.0) ** 2
MIN_MS_SSIM_DIM = 160


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(255^2 / MSE) over all channels; 99.0 dB cap at zero MSE."""
    if a.shape != b.shape:
        raise DomainError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(255.0 * 255.0 / mse))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return w / w.sum()


_WINDOW = _gaussian_window(_WINDOW_SIZE, _WINDOW_SIGMA)


def _filter_axis(img: np.ndarray, axis: int) -> np.ndarray:
    half = _WINDOW_SIZE // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (half, half)
    padded = np.pad(img, pad, mode="symmetric")
    out = np.zeros_like(img)
    for k, wk in enumerate(_WINDOW):
        if axis == 0:
            out += wk * padded[k : k + img.shape[0], :]
        else:
            out += wk * padded[:, k : k + img.shape[1]]
    return out


def _gfilter(img: np.ndarray) -> np.ndarray:
    return _filter_axis(_filter_axis(img, 0), 1)


def _ssim_terms(x: np.ndarray, y: np.ndarray) -> tuple:
    """(mean luminance-structure term, mean contrast-structure term)."""
    mu_x = _gfilter(x)
    mu_y = _gfilter(y)
    var_x = _gfilter(x * x) - mu_x * mu_x
    var_y = _gfilter(y * y) - mu_y * mu_y
    cov = _gfilter(x * y) - mu_x * mu_y
    cs_map = (2.0 * cov + _C2) / (var_x + var_y + _C2)
    l_map = (2.0 * mu_x * mu_y + _C1) / (mu_x * mu_x + mu_y * mu_y + _C1)
    return float(np.mean(l_map * cs_map)), float(np.mean(cs_map))


def _downsample(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    h2, w2 = h // 2, w // 2
    return img[: 2 * h2, : 2 * w2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def _ms_ssim_channel(x: np.ndarray, y: np.ndarray) -> float:
    levels = len(MS_SSIM_WEIGHTS)
    cs_values = []
    for level in range(levels):
        ssim_mean, cs_mean = _ssim_terms(x, y)
        if level == levels - 1:
            final = max(ssim_mean, 0.0)
            break
        cs_values.append(max(cs_mean, 0.0))
        x = _downsample(x)
        y = _downsample(y)
    score = final ** MS_SSIM_WEIGHTS[-1]
    for cs, w in zip(cs_values, MS_SSIM_WEIGHTS[:-1]):
        score *= cs**w
    return score


def ms_ssim(a: np.ndarray, b: np.ndarray) -> float:
    """5-scale MS-SSIM in [0, 1], averaged over RGB channels."""
    if a.shape != b.shape:
        raise DomainError(f"ms_ssim shape mismatch: {a.shape} vs {b.shape}")
    h, w = a.shape[:2]
    if h < MIN_MS_SSIM_DIM or w < MIN_MS_SSIM_DIM:
        raise DomainError(
            f"ms_ssim needs at least {MIN_MS_SSIM_DIM}x{MIN_MS_SSIM_DIM} input "
            f"for 5 dyadic scales (got {h}x{w}); use fewer scales or psnr"
        )
    af = a.astype(np.float64)
    bf = b.astype(np.float64)
    return float(
        np.mean([_ms_ssim_channel(af[:, :, c], bf[:, :, c]) for c in range(3)])
    )


@dataclass(frozen=True)
class MetricsRow:
    """One report row: MSSSIM, PSNR, BPP, Frames, Time (ms)."""

    ms_ssim: float
    psnr_db: float
    bpp: float
    frames: int
    decode_ms: float

    HEADER = "MSSSIM\tPSNR\tBPP\tFrames\tTime(ms)"

    def as_tsv(self) -> str:
        return (
            f"{self.ms_ssim:.4f}\t{self.psnr_db:.2f}\t{self.bpp:.4f}\t"
            f"{self.frames}\t{self.decode_ms:.1f}"
        )


def bits_per_pixel(total_payload_bits: int, display_w: int, display_h: int,
                   frames: int) -> float:
    if frames < 1:
        raise DomainError("bpp needs at least one frame")
    return total_payload_bits / (display_w * display_h * frames)
