"""Exception types shared across the package."""


class EegBenchError(Exception):
    """Base class for all package-specific errors."""


class DataFormatError(EegBenchError):
    """A recording container or serialized artifact is malformed."""


class GenerationError(EegBenchError):
    """A synthetic recording spec is invalid or cannot be packed."""


class EpochingError(EegBenchError):
    """Trial epoching cannot produce a valid trial set."""


class PipelineError(EegBenchError):
    """Preprocessing cannot continue (bad band edges, no usable channels, ...)."""


class GraphError(EegBenchError):
    """Network construction or a layer pass failed."""


class TrainingError(EegBenchError):
    """Training hit a non-finite value or an invalid setup."""


class ConfigError(EegBenchError):
    """A comparison configuration is invalid or contains unknown fields."""


class VerificationError(EegBenchError):
    """A results package could not be audited at all."""


class HarnessError(EegBenchError):
    """A comparison could not produce any usable run."""
