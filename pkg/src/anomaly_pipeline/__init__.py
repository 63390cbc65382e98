"""Unsupervised network-intrusion detection pipeline.

Spatial features come from a multi-scale convolutional autoencoder,
temporal features from an LSTM autoencoder over its latent codes, and
records are flagged by reconstruction-error thresholding with an
isolation-forest correction pass.
"""

from .errors import (
    AnomalyPipelineError,
    ConfigError,
    DataError,
    HashMismatchError,
    PipelineError,
    TrainingDivergedError,
)

__version__ = "0.1.0"

__all__ = [
    "AnomalyPipelineError",
    "ConfigError",
    "DataError",
    "HashMismatchError",
    "PipelineError",
    "TrainingDivergedError",
    "__version__",
]
