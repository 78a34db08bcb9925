"""Exception and warning types raised across the toolkit."""


class CsfqError(Exception):
    """Base class for all toolkit errors."""


class NonPositiveDefinite(CsfqError, ValueError):
    pass


class ConvergenceFailure(CsfqError, RuntimeError):
    pass


class DegenerateResonance(CsfqError, ValueError):
    pass


class IllConditioned(CsfqError, ValueError):
    pass


class QuadratureFailure(CsfqError, RuntimeError):
    pass


class FactorizationFailure(CsfqError, RuntimeError):
    pass


class OutOfDomain(CsfqError, ValueError):
    pass


class SingularSystem(CsfqError, ValueError):
    pass


class UnphysicalInput(CsfqError, ValueError):
    pass


class StepTooCoarse(CsfqError, ValueError):
    pass


class BracketingFailure(CsfqError, ValueError):
    pass


class IntegrationFailure(CsfqError, RuntimeError):
    pass


class Degenerate(CsfqError, ValueError):
    pass


class ParseError(CsfqError, ValueError):
    def __init__(self, msg, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{msg} ({', '.join(where)})" if where else msg)
        self.line = line
        self.field = field


class ValidationError(CsfqError, ValueError):
    pass


class NoConvergence(UserWarning):
    """Optimizer stopped at its iteration cap; the returned result is best-so-far."""


class InsufficientTrajectories(UserWarning):
    pass


class LeakageWarning(UserWarning):
    pass


class BothZero(CsfqError, ValueError):
    pass


class NoFeasiblePoint(UserWarning):
    """No candidate satisfied the hard bounds; the best infeasible one is returned."""
