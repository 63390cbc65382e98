"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: ConfigError -> 1, PipelineError and
subclasses -> 2, HashMismatchError -> 3.
"""


class AnomalyPipelineError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(AnomalyPipelineError):
    """Invalid configuration, schema, or command-line input."""


class PipelineError(AnomalyPipelineError):
    """Runtime failure inside a pipeline stage."""

    def __init__(self, message: str, stage: str | None = None):
        self.stage = stage
        super().__init__(f"[{stage}] {message}" if stage else message)


class DataError(PipelineError):
    """Malformed input data (bad rows, unmappable labels, wrong widths)."""


class TrainingDivergedError(PipelineError):
    """Non-finite loss or gradient encountered during training."""


class HashMismatchError(AnomalyPipelineError):
    """Stored artifact was produced under a different config hash."""
