"""Exception hierarchy shared by every module."""


class FundsepError(Exception):
    """Base class; carries an exit code for the command line."""

    exit_code = 1


class InvalidSpec(FundsepError, ValueError):
    pass


class AssumptionViolated(FundsepError):
    exit_code = 2


class EmptyGrid(FundsepError, ValueError):
    pass


class QuadratureFailure(FundsepError, RuntimeError):
    pass


class NonPositiveState(FundsepError, RuntimeError):
    pass


class ConfigError(FundsepError, ValueError):
    pass


class MissingFunctional(FundsepError, KeyError):
    pass


class UnsupportedMeasurePair(FundsepError, ValueError):
    pass


class DomainError(FundsepError, ValueError):
    pass


class ParameterOutOfRange(FundsepError, ValueError):
    pass


class DegenerateFit(FundsepError, ValueError):
    pass


class DegenerateObservation(FundsepError, ValueError):
    pass


class NonFinite(FundsepError, FloatingPointError):
    pass


class ParseError(FundsepError, ValueError):
    pass


class ValidationError(FundsepError, ValueError):
    pass


class CheckFailed(FundsepError):
    exit_code = 3
