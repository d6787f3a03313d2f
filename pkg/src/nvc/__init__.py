"""Integer-deterministic neural inter-frame video codec.

Quantized 8-bit inference for intra and inter (motion + residual) codec
graphs, Gaussian entropy models over precomputed CDF tables, a parallel
static arithmetic coder with entry-point-indexed payloads, and the
container/CLI tooling around them.
"""

from .codec import (
    DecoderState,
    FramePayload,
    decode_frames,
    encode_frames,
    inter_decode,
    inter_encode,
    intra_decode,
    intra_encode,
)
from .complexity import ComplexityReport, count_complexity
from .config import CodecConfig, LayerDef, default_config
from .container import ContainerHeader, FrameRecord, read_stream, write_stream
from .entropy import (
    CdfTable,
    ScaleQuantParams,
    TableSet,
    ac_decode,
    ac_encode,
    build_cdf_table,
    dequantize_log_scale,
    quantize_log_scale,
    rate_estimate,
    table_set,
)
from .errors import (
    ConfigError,
    DomainError,
    FormatError,
    GraphError,
    NvcError,
    StreamSyncError,
    TrailingGarbageWarning,
    TruncatedStreamError,
    ValidationError,
)
from .metrics import MetricsRow, ms_ssim, psnr
from .partition import (
    PartitionedPayload,
    PartitionPlan,
    decode_parallel,
    encode_parallel,
    plan_partitions,
)
from .qtensor import (
    ConvLayerSpec,
    QuantTensor,
    add_q,
    concat_q,
    conv_q,
    requantize_q,
    sub_q,
)
from .video import RawVideo, crop_to_display, pad_to_multiple
from .weights import ModelWeights, generate_weights

__version__ = "0.1.0"
