"""Exception hierarchy shared by every module."""


class BregsqError(Exception):
    """Base class for all library errors."""


class DomainError(BregsqError, ValueError):
    """A value lies outside the domain of a generator or distribution."""

    def __init__(self, message, argument=None, index=None):
        super().__init__(message)
        self.argument = argument
        self.index = index


class EmptyInput(BregsqError, ValueError):
    pass


class InvalidWeights(BregsqError, ValueError):
    pass


class InversionError(BregsqError, ValueError):
    """The tail average falls outside the image of gamma'."""


class TailTooSmall(BregsqError, ValueError):
    pass


class NoInterval(BregsqError):
    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


class OracleFailure(BregsqError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class VarianceDiverges(BregsqError, ArithmeticError):
    pass


class SingularDensity(BregsqError, ArithmeticError):
    pass


class CapabilityError(BregsqError, TypeError):
    """A required derivative (gamma''' or f') is not available."""


class UnstableFit(BregsqError, ArithmeticError):
    def __init__(self, message, slope=float("nan"), residual=float("nan")):
        super().__init__(message)
        self.slope = slope
        self.residual = residual


class ParseError(BregsqError, ValueError):
    pass


class ManifestError(BregsqError, ValueError):
    pass
