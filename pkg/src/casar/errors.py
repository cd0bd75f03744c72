"""Exception types shared across the package.

The CLI maps these onto process exit codes: validation/config problems
exit 2, I/O problems exit 3, numeric failures exit 4.
"""


class CasarError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ValidationError(CasarError, ValueError):
    """Invalid value, configuration, or contract violation."""

    exit_code = 2


class ShapeError(ValidationError):
    """Array or vector with the wrong length/shape for the operation."""


class ParseError(ValidationError):
    """Malformed input file; message names the file and record."""


class CheckpointError(ValidationError):
    """Bad magic, version mismatch, or truncated checkpoint file."""


class DataIOError(CasarError, OSError):
    """Missing or unreadable/unwritable file or directory."""

    exit_code = 3


class NumericError(CasarError, ArithmeticError):
    """Non-finite values encountered where finite math was required."""

    exit_code = 4
