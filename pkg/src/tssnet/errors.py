"""Exception hierarchy shared across the pipeline."""


class TssnetError(Exception):
    """Base class for all tssnet errors."""


class ParameterError(TssnetError, ValueError):
    """An argument violates an operation's precondition."""


class OutOfDomainError(ParameterError):
    """A concentration falls outside the characterized 0-20000 mg/L domain."""


class ValidationError(TssnetError):
    """Data failed a consistency check (manifest, config, labels)."""


class IngestionError(TssnetError):
    """A video could not be opened or decoded; carries decoder diagnostics."""


class CheckpointError(TssnetError):
    """Base class for checkpoint I/O failures."""


class CheckpointIncompatibleError(CheckpointError):
    """Checkpoint tensors do not match the expected network layout."""


class CheckpointCorruptError(CheckpointError):
    """Checkpoint file is truncated or internally inconsistent."""


class TrainingError(TssnetError):
    """Training aborted (non-finite loss or gradient); carries diagnostics."""


class UndefinedMetricError(TssnetError):
    """A metric or curve is undefined for the given inputs."""
