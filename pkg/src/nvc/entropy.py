"""Log-scale quantizer, Gaussian CDF tables, and the static arithmetic coder.

The coder alphabet is the 8-bit activation grid (-128..127).  Probability
tables are zero-mean Gaussians whose standard deviation is addressed by a
single byte: n = clamp(floor(gamma*ln(sigma)) + theta, 0, 255).  Both ends
of a link derive the full 256-table set from (gamma, theta) alone, so no
table data is ever transmitted.

The coder itself is a static (non-adaptive) arithmetic coder with a 32-bit
low register, probabilities and range factors in a 16-bit domain (total
mass exactly 65536), and byte-based renormalization with carry
propagation.  Encoding and decoding are exact inverses for any symbol /
table-index pairing.
"""

import math
import warnings
from bisect import bisect_right
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, TrailingGarbageWarning, TruncatedStreamError
from .gaussian import exp_fixed, normal_cdf

TOTAL_MASS = 1 << 16
NUM_TABLES = 256
ALPHABET = 256  # symbols -128..127 map to bins 0..255

_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF


@dataclass(frozen=True)
class ScaleQuantParams:
    """Parameters of the logarithmic scale quantizer.

    gamma must be representable in unsigned 16-bit fixed point with 8
    fraction bits because the container header carries it in that form;
    enforcing it here guarantees the sender and receiver build identical
    tables.
    """

    gamma: float = 32.0
    theta: int = 70

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError(f"gamma must be positive, got {self.gamma}")
        fp = round(self.gamma * 256.0)
        if not 0 < fp <= 0xFFFF or fp / 256.0 != self.gamma:
            raise DomainError(
                f"gamma {self.gamma} is not representable as u16 fixed point "
                "with 8 fraction bits"
            )
        if not -32768 <= int(self.theta) <= 32767:
            raise DomainError(f"theta {self.theta} out of i16 range")

    @property
    def gamma_fixed(self) -> int:
        return round(self.gamma * 256.0)


def quantize_log_scale(sigma: float, params: ScaleQuantParams = ScaleQuantParams()) -> int:
    """Map a positive scale to its table index: clamp(floor(gamma*ln(sigma)) + theta)."""
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    n = math.floor(params.gamma * math.log(sigma)) + params.theta
    return max(0, min(NUM_TABLES - 1, n))


def dequantize_log_scale(n: int, params: ScaleQuantParams = ScaleQuantParams()) -> float:
    """Representative scale of bin n: exp((n - theta + 0.5) / gamma).

    Uses the deterministic exponential so the value (and hence the CDF
    table derived from it) is identical on every platform.
    """
    if not 0 <= n < NUM_TABLES:
        raise DomainError(f"table index {n} out of [0, 255]")
    return exp_fixed((n - params.theta + 0.5) / params.gamma)


def bin_masses(n: int, params: ScaleQuantParams = ScaleQuantParams()) -> np.ndarray:
    """Integer bin masses for table n before flooring and normalization.

    Bin b holds symbol s = b - 128.  Interior bins get
    round(65536 * (Phi((s+0.5)/sigma) - Phi((s-0.5)/sigma))); the two end
    bins absorb the corresponding Gaussian tail.  Rounding is half-up.
    """
    sigma = dequantize_log_scale(n, params)
    edges = [normal_cdf((b - 128 + 0.5) / sigma) for b in range(ALPHABET - 1)]
    masses = np.empty(ALPHABET, dtype=np.int64)
    masses[0] = math.floor(TOTAL_MASS * edges[0] + 0.5)
    for b in range(1, ALPHABET - 1):
        masses[b] = math.floor(TOTAL_MASS * (edges[b] - edges[b - 1]) + 0.5)
    masses[ALPHABET - 1] = math.floor(TOTAL_MASS * (1.0 - edges[ALPHABET - 2]) + 0.5)
    return masses


@dataclass(frozen=True)
class CdfTable:
    """Cumulative distribution for one quantized log-scale index.

    cdf has 257 entries with cdf[0] == 0 and cdf[256] == 65536, strictly
    increasing (every symbol keeps mass >= 1 so it stays encodable).
    """

    n_index: int
    cdf: tuple

    def __post_init__(self):
        if len(self.cdf) != ALPHABET + 1 or self.cdf[0] != 0 or self.cdf[-1] != TOTAL_MASS:
            raise DomainError("cdf must have 257 entries spanning [0, 65536]")

    def mass(self, symbol: int) -> int:
        b = symbol + 128
        return self.cdf[b + 1] - self.cdf[b]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.cdf, dtype=np.uint32)


def build_cdf_table(n: int, params: ScaleQuantParams = ScaleQuantParams()) -> CdfTable:
    """Build the coder table for index n.

    Raw masses are floored at 1 (arithmetic coding cannot represent a
    zero-probability symbol), then the largest bin is corrected so the
    total is exactly 65536.
    """
    masses = np.maximum(bin_masses(n, params), 1)
    largest = int(np.argmax(masses))
    masses[largest] += TOTAL_MASS - int(masses.sum())
    if masses[largest] < 1:
        raise DomainError(f"table {n} cannot be normalized")
    cdf = np.zeros(ALPHABET + 1, dtype=np.int64)
    np.cumsum(masses, out=cdf[1:])
    return CdfTable(n_index=n, cdf=tuple(int(v) for v in cdf))


class TableSet:
    """All 256 CDF tables for one parameter set; immutable and shareable.

    Deterministically derivable from ScaleQuantParams alone, so sender and
    receiver never exchange table data.
    """

    def __init__(self, params: ScaleQuantParams = ScaleQuantParams()):
        self.params = params
        self.tables = tuple(build_cdf_table(n, params) for n in range(NUM_TABLES))
        self._cdfs = tuple(t.cdf for t in self.tables)
        # mass[n, b]: probability mass of bin b under table n
        arr = np.array([t.cdf for t in self.tables], dtype=np.int64)
        self._mass = arr[:, 1:] - arr[:, :-1]
        self.nbytes = NUM_TABLES * (ALPHABET + 1) * 4

    def __getitem__(self, n: int) -> CdfTable:
        return self.tables[n]

    def masses(self) -> np.ndarray:
        """(256, 256) int64 matrix of bin masses, mass[n, symbol+128]."""
        return self._mass

    def dump(self) -> bytes:
        """Debug dump: per-n record of 257 little-endian u32 values."""
        arr = np.array([t.cdf for t in self.tables], dtype="<u4")
        return arr.tobytes()


@lru_cache(maxsize=4)
def _cached_table_set(gamma_fixed: int, theta: int) -> TableSet:
    return TableSet(ScaleQuantParams(gamma=gamma_fixed / 256.0, theta=theta))


def table_set(params: ScaleQuantParams = ScaleQuantParams()) -> TableSet:
    """Shared TableSet for the given parameters (construction is ~0.2 s)."""
    return _cached_table_set(params.gamma_fixed, int(params.theta))


def ac_encode(symbols, table_indices, tables: TableSet) -> bytes:
    """Arithmetic-encode int8 symbols, one table index per symbol.

    32-bit low register with carry propagation into already-emitted bytes,
    range kept >= 2^24 by byte renormalization, 16-bit probability domain.
    The flush emits five bytes so any prefix of the code value the decoder
    needs is available.
    """
    symbols = np.asarray(symbols, dtype=np.int64)
    table_indices = np.asarray(table_indices, dtype=np.int64)
    if symbols.shape != table_indices.shape:
        raise DomainError("symbols and table indices must have equal length")
    cdfs = tables._cdfs

    low = 0
    rng = _MASK32
    cache = 0
    pending = 1  # bytes represented by cache plus a run of 0xFF
    out = bytearray()

    def shift_low():
        nonlocal low, cache, pending
        if low < 0xFF000000 or low > _MASK32:
            carry = low >> 32
            out.append((cache + carry) & 0xFF)
            out.extend(((0xFF + carry) & 0xFF,) * (pending - 1))
            cache = (low >> 24) & 0xFF
            pending = 0
        pending += 1
        low = (low << 8) & _MASK32

    for s, n in zip(symbols.tolist(), table_indices.tolist()):
        cdf = cdfs[n]
        b = s + 128
        clo = cdf[b]
        chi = cdf[b + 1]
        r = rng >> 16
        low += r * clo
        if chi == TOTAL_MASS:
            rng -= r * clo  # top bin absorbs the range rounding remainder
        else:
            rng = r * (chi - clo)
        while rng < _TOP:
            shift_low()
            rng = (rng << 8) & _MASK32
    for _ in range(5):
        shift_low()
    return bytes(out)


def ac_decode(payload: bytes, count: int, table_indices, tables: TableSet) -> np.ndarray:
    """Exact inverse of ac_encode; returns int8 symbols.

    Raises TruncatedStreamError if the payload ends early and warns (but
    still returns) when unread bytes remain past the flush.
    """
    table_indices = np.asarray(table_indices, dtype=np.int64)
    if len(table_indices) != count:
        raise DomainError("table indices must have length == count")
    cdfs = tables._cdfs

    pos = 0
    n_payload = len(payload)

    def next_byte():
        nonlocal pos
        if pos >= n_payload:
            raise TruncatedStreamError(
                f"arithmetic-coded payload exhausted at byte {pos}"
            )
        v = payload[pos]
        pos += 1
        return v

    next_byte()  # leading byte carries no information
    code = 0
    for _ in range(4):
        code = (code << 8) | next_byte()
    rng = _MASK32

    out = np.empty(count, dtype=np.int8)
    for i in range(count):
        cdf = cdfs[table_indices[i]]
        r = rng >> 16
        v = code // r
        if v >= TOTAL_MASS:
            v = TOTAL_MASS - 1
        b = bisect_right(cdf, v) - 1
        clo = cdf[b]
        chi = cdf[b + 1]
        code -= r * clo
        if chi == TOTAL_MASS:
            rng -= r * clo
        else:
            rng = r * (chi - clo)
        while rng < _TOP:
            code = ((code << 8) | next_byte()) & _MASK32
            rng = (rng << 8) & _MASK32
        out[i] = b - 128
    if pos < n_payload:
        warnings.warn(
            f"{n_payload - pos} unread byte(s) after decoding {count} symbols",
            TrailingGarbageWarning,
        )
    return out


def rate_estimate(symbols, table_indices, tables: TableSet) -> float:
    """Ideal code length in bits: sum of -log2(mass/65536) per symbol."""
    symbols = np.asarray(symbols, dtype=np.int64)
    table_indices = np.asarray(table_indices, dtype=np.int64)
    if symbols.shape != table_indices.shape:
        raise DomainError("symbols and table indices must have equal length")
    if symbols.size == 0:
        return 0.0
    m = tables.masses()[table_indices, symbols + 128]
    return float(np.sum(16.0 - np.log2(m.astype(np.float64))))


def table_cross_entropy_bits(table: CdfTable) -> float:
    """Expected bits/symbol when symbols are drawn from the table itself."""
    m = np.asarray(table.cdf[1:], dtype=np.float64) - np.asarray(
        table.cdf[:-1], dtype=np.float64
    )
    p = m / TOTAL_MASS
    return float(np.sum(p * (16.0 - np.log2(m))))
