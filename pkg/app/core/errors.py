from __future__ import annotations


class WeylCompError(Exception):
    """Base class for engine failures."""


class ConfigError(WeylCompError):
    pass


class InvalidDiscretizationError(WeylCompError, ValueError):
    pass


class InvalidParameterError(WeylCompError, ValueError):
    pass


class BandLimitError(WeylCompError, ValueError):
    pass


class AliasingError(WeylCompError, ArithmeticError):
    pass


class ModeMismatchError(WeylCompError, ValueError):
    pass


class SymbolFormError(WeylCompError, ValueError):
    pass


class DilationError(WeylCompError, ValueError):
    pass


class QuadratureError(WeylCompError, ArithmeticError):
    pass


class NonDecayingInputError(QuadratureError):
    pass


class TruncationError(WeylCompError, ArithmeticError):
    pass


class HypothesisViolationError(WeylCompError, ValueError):
    pass
