"""Exception types shared across the exporter."""

from __future__ import annotations


class ExportError(Exception):
    """Bad export configuration or a tokenizer-alignment failure."""


class CorpusFormatError(Exception):
    """A corpus file violates the tagged-sentence grammar."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number
