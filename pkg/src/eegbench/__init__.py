"""eegbench: a self-contained benchmark for EEG decoding networks.

Synthetic or recorded EEG goes through a fixed cleaning pipeline, four
convolutional decoders train on a small from-scratch tensor engine, and
per-example accuracies are compared with permutation and sign tests. The
harness packages every run into a byte-reproducible results directory.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataFormatError,
    EegBenchError,
    EpochingError,
    GenerationError,
    GraphError,
    HarnessError,
    PipelineError,
    TrainingError,
    VerificationError,
)

__all__ = [
    "__version__",
    "ConfigError",
    "DataFormatError",
    "EegBenchError",
    "EpochingError",
    "GenerationError",
    "GraphError",
    "HarnessError",
    "PipelineError",
    "TrainingError",
    "VerificationError",
]
