"""Exception hierarchy.

Every class carries a short ``category`` string; the command line prints it
as the machine-parsable first token of its one-line error message.
"""


class SdpmixError(Exception):
    category = "error"


class ParameterError(SdpmixError, ValueError):
    """A distribution or prior parameter lies outside its domain."""

    category = "parameter"


class DimensionError(SdpmixError, ValueError):
    category = "dimension"


class ConfigurationError(SdpmixError, ValueError):
    """Incompatible combination of model, variant and reporting options."""

    category = "configuration"


class SingularDesignError(SdpmixError, ValueError):
    def __init__(self, message, rank=None, p=None):
        super().__init__(message)
        self.rank = rank
        self.p = p

    category = "singular-design"


class QuadratureError(SdpmixError, RuntimeError):
    def __init__(self, message, abserr=None):
        super().__init__(message)
        self.abserr = abserr

    category = "quadrature"


class DataFormatError(SdpmixError, ValueError):
    """Malformed input file; ``line`` is 1-based and counts the header."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line

    category = "data-format"


class InvariantError(SdpmixError, AssertionError):
    """Internal bookkeeping is inconsistent. Always a bug."""

    category = "internal"
