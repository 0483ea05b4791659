"""Exception types shared across the package.

Every error raised on a user-facing path derives from OutspanError so the
command line layer can map it to a stable exit code and a structured record.
"""

from __future__ import annotations


class OutspanError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(OutspanError):
    """Tensor operation received operands with incompatible shapes."""


class GradientError(OutspanError):
    """Misuse of the differentiation machinery.

    Raised for non-scalar losses, losses not produced under the given tape,
    and attempts to differentiate through untracked values.
    """


class StateError(OutspanError):
    """An operation was applied to a value in the wrong state."""


class CorpusFormatError(OutspanError):
    """A corpus file violates the tagged-sentence grammar."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class EmbeddingError(OutspanError):
    """An embedding file is malformed or does not cover the corpus."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ConfigError(OutspanError):
    """A configuration file or override is invalid."""


class CheckpointError(OutspanError):
    """A checkpoint file cannot be loaded into the requested model."""


class DivergenceError(OutspanError):
    """Training produced a non-finite loss.

    Carries the last finite-loss parameter snapshot so callers can save it.
    """

    def __init__(self, message: str, last_good=None):
        super().__init__(message)
        self.last_good = last_good


class EvaluationError(OutspanError):
    """Predictions cannot be scored against the given corpus."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class AlignmentError(OutspanError):
    """Label alignment or corpus merging cannot proceed."""
