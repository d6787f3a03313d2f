"""Exception taxonomy shared across the codec.

Every failure the library can signal on malformed input or misuse is a
subclass of NvcError, so callers (and the fuzz harness) can distinguish
codec errors from genuine bugs.
"""


class NvcError(Exception):
    """Base class for all codec errors."""


class ConfigError(NvcError):
    """Layer or configuration description is inconsistent."""


class GraphError(NvcError):
    """Tensor shapes or quantization grids do not line up at a graph node."""


class DomainError(NvcError):
    """Numeric argument outside its mathematical domain."""


class FormatError(NvcError):
    """Byte stream does not match the documented layout."""


class TruncatedStreamError(FormatError):
    """Stream ended before a declared structure was complete."""


class ValidationError(FormatError):
    """Parsed values violate a documented invariant."""


class StreamSyncError(NvcError):
    """Decoder state does not match the frame schedule (e.g. GoP desync)."""


class TrailingGarbageWarning(UserWarning):
    """Payload contained bytes beyond what decoding consumed."""
