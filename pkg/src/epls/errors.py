"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map it to a
process status without a lookup table.
"""


class EPLSError(Exception):
    exit_code = 1


class ConfigError(EPLSError, ValueError):
    """Invalid sizes or options (e.g. fewer samples than outputs)."""

    exit_code = 2


class ShapeError(EPLSError, ValueError):
    exit_code = 3


class FormatError(EPLSError):
    """Base class for on-disk format problems."""

    exit_code = 3
    code = "format"


class BadMagicError(FormatError):
    code = "bad-magic"


class TruncatedFileError(FormatError):
    code = "truncated"


class UnknownDtypeError(FormatError):
    code = "unknown-dtype"


class NumericalError(EPLSError, ArithmeticError):
    """Non-finite loss, gradient or parameter encountered."""

    exit_code = 4


class GuardError(EPLSError, ValueError):
    """Instance exceeds the size an exact/brute-force solver accepts."""

    exit_code = 2
