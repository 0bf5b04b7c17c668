"""Exception types raised across the package."""


class MoeDistError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(MoeDistError, ValueError):
    """Distribution parameters outside their valid region."""


class SupportError(MoeDistError, ValueError):
    """Response value outside the support of a discrete family."""


class DimensionError(MoeDistError, ValueError):
    """Shapes of arrays or coefficient segments do not agree."""


class SpecError(MoeDistError, ValueError):
    """Invalid model specification (family, formulas, networks, config)."""


class FormulaParseError(SpecError):
    """Malformed formula string.

    ``position`` is the 0-based character offset where parsing failed.
    """

    def __init__(self, message, text="", position=0):
        self.text = text
        self.position = position
        super().__init__(f"{message} at position {position}: {text!r}")


class DataError(MoeDistError, ValueError):
    """Missing or non-numeric data columns, NaNs, unequal lengths."""


class StaleCacheError(MoeDistError, RuntimeError):
    """``backward`` called without a matching ``forward``."""


class DegenerateRowError(MoeDistError, ValueError):
    """An observation has zero likelihood under every component."""


class NonFiniteLossError(MoeDistError, FloatingPointError):
    """Training objective became NaN or infinite."""

    def __init__(self, message, epoch=None, batch=None):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"{message} (epoch={epoch}, batch={batch})")


class VersionError(MoeDistError, ValueError):
    """Fitted-model file written by an incompatible format version."""
