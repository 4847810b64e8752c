"""Exception types shared across the toolkit.

Everything raised for bad data, bad models, or bad configuration derives
from QuercError; the CLI maps those to exit code 2 (usage errors are 1).
"""


class QuercError(Exception):
    """Base class for data and model errors."""


class IngestError(QuercError):
    """Unreadable log file, or a rejected line in strict mode."""


class ContainerError(QuercError):
    """Bad magic, unsupported format version, kind mismatch, or truncation."""


class ConfigError(QuercError):
    """Invalid hyperparameters or service/workload configuration."""


class EmbedError(QuercError):
    """A query could not be embedded (e.g. it tokenizes to nothing)."""


class TrainingDiverged(QuercError):
    """Training produced a non-finite loss."""
