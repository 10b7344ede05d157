"""Exception types shared across the package."""


class CosevoError(Exception):
    """Base class for all package-specific errors."""


class InvalidSizeError(CosevoError, ValueError):
    """A dimension argument is zero, negative, or otherwise unusable."""


class InvalidTruncationError(CosevoError, ValueError):
    """Truncation level outside 1..min(height, width)."""


class InvalidPercentileError(CosevoError, ValueError):
    """Percentile outside the half-open range [0, 100)."""


class ShapeError(CosevoError, ValueError):
    """Matrix or vector dimensions do not match the expected layout."""


class ConfigError(CosevoError, ValueError):
    """A configuration object violates its invariants."""


class NumericalError(CosevoError, ArithmeticError):
    """A numerical operation degenerated (e.g. covariance decomposition failed)."""


class LifecycleError(CosevoError, RuntimeError):
    """Environment stepped after termination or before reset."""


class InvalidActionError(CosevoError, ValueError):
    """Action index outside the environment's action set."""


class EvaluationError(CosevoError, RuntimeError):
    """Policy evaluation produced unusable output (e.g. non-finite logits)."""


class ProtocolError(CosevoError, RuntimeError):
    """Wire-level violation: bad magic, bad opcode, or an error response."""


class TransportError(CosevoError, RuntimeError):
    """Byte stream ended or failed mid-message; the connection is unusable."""


class CheckpointError(CosevoError, RuntimeError):
    """Checkpoint file missing, corrupt, or incompatible with the config."""
