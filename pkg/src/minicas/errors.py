"""Error types shared across the kernel."""
from __future__ import annotations


class CasError(Exception):
    """Base class for user-visible errors."""


class ParseError(CasError):
    pass


class EvalError(CasError):
    pass


class DivisionByZero(CasError):
    def __init__(self, msg: str = "division by zero"):
        super().__init__(msg)


class BudgetExceeded(CasError):
    def __init__(self, msg: str = "step budget exceeded"):
        super().__init__(msg)


class ContradictoryAssumption(CasError):
    pass


class NotPolynomial(CasError):
    pass


class SystemTooHard(CasError):
    pass


class SingularPoint(CasError):
    pass


class SingularCoframe(EvalError):
    pass


class DimensionMismatch(EvalError):
    pass


class NoMetric(EvalError):
    pass


class NoFrame(EvalError):
    pass


class IndexBalance(EvalError):
    pass


class FreeIndexMismatch(EvalError):
    pass
