"""Exception hierarchy shared by all modules."""


class BiphasicError(Exception):
    """Base class for every error raised by the package."""


class PoissonRatioSingular(BiphasicError, ValueError):
    pass


class NonPositiveAlpha3(BiphasicError, ValueError):
    """Coercivity constant alpha3 is not strictly positive."""


class ParseError(BiphasicError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(BiphasicError, ValueError):
    def __init__(self, message, indices=()):
        self.indices = tuple(int(i) for i in indices)
        super().__init__(message)


class UnsupportedElement(BiphasicError, ValueError):
    pass


class DimensionMismatch(BiphasicError, ValueError):
    pass


class LossOfPositivity(BiphasicError, ArithmeticError):
    """A resistivity value failed to be symmetric positive definite."""


class SpaceMismatch(BiphasicError, ValueError):
    pass


class SingularSystem(BiphasicError, ArithmeticError):
    pass


class ToleranceNotReached(BiphasicError, ArithmeticError):
    pass


class MaxIterationsExceeded(BiphasicError, RuntimeError):
    def __init__(self, message, report=None, solution=None):
        self.report = report
        self.solution = solution
        super().__init__(message)


class ScheduleExhausted(BiphasicError, RuntimeError):
    def __init__(self, message, reports=None, solution=None):
        self.reports = reports
        self.solution = solution
        super().__init__(message)


class BoundaryViolation(BiphasicError, ValueError):
    pass


class ConstraintsNotSatisfied(BiphasicError, RuntimeError):
    def __init__(self, message, result=None):
        self.result = result
        super().__init__(message)


class ConfigError(BiphasicError, ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
