"""Word-level contextual vector export in the tagging engine's file formats."""

from .corpus import Corpus, Document, Sentence, parse_corpus, read_corpus
from .errors import CorpusFormatError, ExportError
from .export import ExportConfig, ExportSummary, export, resolve_layer
from .verify import verify_export

__all__ = [
    "Corpus",
    "CorpusFormatError",
    "Document",
    "ExportConfig",
    "ExportError",
    "ExportSummary",
    "Sentence",
    "export",
    "parse_corpus",
    "read_corpus",
    "resolve_layer",
    "verify_export",
]
