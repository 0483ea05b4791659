"""Joint outcome-span detection and outcome-type classification."""

__version__ = "0.1.0"
