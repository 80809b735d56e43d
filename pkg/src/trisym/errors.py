"""Exception types shared across the library.

The CLI maps these onto process exit codes, so raising the right type
matters more than the message text.
"""


class TrisymError(Exception):
    """Base class for all library errors."""


class UsageError(TrisymError):
    """Bad arguments, bad config file, unknown keys."""


class DataError(TrisymError):
    """Malformed or inconsistent dataset content."""


class DimensionError(TrisymError):
    """Array shapes do not satisfy an operation's contract."""


class NumericError(TrisymError):
    """NaN/Inf encountered, singular system, or non-convergence."""


class CheckFailure(TrisymError):
    """A verification command (symcheck/gradcheck) exceeded its tolerance."""
