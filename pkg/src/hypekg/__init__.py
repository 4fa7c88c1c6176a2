"""Hyperboloid embeddings for positive first-order queries over knowledge graphs."""

from .errors import DataError, HypekgError, NumericError, UsageError

__version__ = "0.1.0"
__all__ = ["DataError", "HypekgError", "NumericError", "UsageError", "__version__"]
