"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: configuration problems exit 2,
data/parse/stream problems exit 3, numerical failures exit 4.
"""

from __future__ import annotations


class ConfigError(ValueError):
    """Invalid configuration or parameters."""


class DataError(ValueError):
    """Invalid data content (files, streams)."""


class ParseError(DataError):
    """Malformed input file; carries the offending line number."""

    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class StreamGapError(DataError):
    """Timestamp gap or irregular sampling in an input stream."""


class NumericalError(ArithmeticError):
    """Numerical failure (singular or ill-conditioned system)."""


class DegenerateInputError(ValueError):
    """Input without enough variation for the requested transform."""
