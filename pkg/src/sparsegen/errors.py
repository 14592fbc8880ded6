"""Exception hierarchy shared across the package."""


class FormatError(ValueError):
    """A persisted file does not follow its binary layout."""


class BadMagicError(FormatError):
    """Leading magic bytes/number do not identify the expected format."""


class TruncatedFileError(FormatError):
    """File ends before the payload announced by its header."""


class ShapeMismatchError(FormatError):
    """Header dimensions disagree with the payload or with what the caller expects."""


class ScaleLimitError(ValueError):
    """A brute-force routine was asked to run beyond its tractable size."""


class InfeasibleError(ValueError):
    """No signal satisfies the measurement-tube constraint."""


class NumericalError(ArithmeticError):
    """A computation produced NaN or infinite values."""
