"""
Vote-Share Toolkit — Error Types

Library code raises these; the pipeline orchestrator maps them to exit codes.
"""


class VoteShareError(Exception):
    """Base class for every toolkit error."""

    exit_code = 1


class ConfigError(VoteShareError):
    """Invalid or inconsistent run configuration."""

    exit_code = 2


class InputError(VoteShareError):
    """Unreadable, empty or malformed input data."""

    exit_code = 3


class RecordParseError(InputError):
    """One JSON-lines record could not be parsed."""

    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"line {line_number}: {reason}")


class RecordRejectedError(RecordParseError):
    """A parsed record lacks a required field."""


class TrainingDataError(InputError):
    """Labeled data cannot train or evaluate a classifier."""


class GeoDataError(InputError):
    """Geographic data is missing or inconsistent."""


class UndefinedEstimateError(VoteShareError):
    """A vote-share model has nothing to count in its scope."""

    exit_code = 4


class DegenerateBootstrapError(UndefinedEstimateError):
    """More than half of the resamples produced an undefined estimate."""


class UndefinedCorrelationError(VoteShareError):
    """Pearson r is undefined (zero variance or too few points)."""

    exit_code = 4
