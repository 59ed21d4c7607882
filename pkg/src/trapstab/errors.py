"""Exception types raised across the package."""


class TrapStabError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(TrapStabError, ValueError):
    pass


class InstabilityError(TrapStabError, ValueError):
    """A requested configuration has no confining (real) secular frequency."""

    def __init__(self, message, rod_dc=None):
        super().__init__(message)
        self.rod_dc = rod_dc


class UncalibratableError(TrapStabError, ValueError):
    pass


class ConvergenceError(TrapStabError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class PhaseMisclassificationError(TrapStabError, RuntimeError):
    pass


class BracketError(TrapStabError, RuntimeError):
    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class DomainError(TrapStabError, ValueError):
    pass


class DivergenceError(TrapStabError, ZeroDivisionError):
    pass


class SetpointRangeError(TrapStabError, ValueError):
    pass


class FitQualityError(TrapStabError, RuntimeError):
    pass


class InsufficientDataError(TrapStabError, ValueError):
    pass


class ScenarioValidationError(TrapStabError, ValueError):
    """Raised with a list of ``(field, message)`` problems."""

    def __init__(self, problems):
        self.problems = list(problems)
        text = "; ".join(f"{field}: {msg}" for field, msg in self.problems)
        super().__init__(text)
