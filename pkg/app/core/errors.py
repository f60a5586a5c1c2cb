from __future__ import annotations


class MaternLabError(Exception):
    """Base class for every error raised by the workbench."""


class ConfigError(MaternLabError, ValueError):
    pass


class DomainError(MaternLabError, ValueError):
    pass


class ValidationError(MaternLabError, ValueError):
    def __init__(self, violations: list[str]) -> None:
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "invalid kernel")


class UnsupportedFamily(MaternLabError):
    pass


class UnsupportedPair(MaternLabError):
    pass


class DimensionOutOfRange(MaternLabError):
    pass


class ConvergenceError(MaternLabError, ArithmeticError):
    pass


class QuadratureError(ConvergenceError):
    pass


class BracketError(ConvergenceError):
    pass


class NotPositiveDefinite(MaternLabError, ArithmeticError):
    pass


class FlatData(MaternLabError):
    pass


class NoFreeParameters(MaternLabError):
    pass


class AllStartsFailed(MaternLabError):
    pass


class DegenerateDesign(MaternLabError):
    pass


class EmptyNearSet(MaternLabError):
    pass


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# errors that mean "the request itself is wrong", everything else is numerical
CONFIG_ERRORS: tuple[type[BaseException], ...] = (
    ConfigError,
    ValidationError,
    DomainError,
    UnsupportedFamily,
    UnsupportedPair,
    DimensionOutOfRange,
    NoFreeParameters,
)


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, CONFIG_ERRORS):
        return EXIT_CONFIG
    return EXIT_NUMERICAL
