"""Exception and warning types raised across the package."""


class CavmemError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(CavmemError, ValueError):
    pass


class ZeroDetuning(CavmemError, ValueError):
    pass


class NotUnitary(CavmemError, ValueError):
    pass


class UnstableStep(CavmemError, ValueError):
    """The requested step violates the integrator stability guard."""


class FactorOutOfRange(CavmemError, ValueError):
    pass


class DivergentGain(CavmemError, ArithmeticError):
    """Dwell-time denominator vanishes (lambda * alpha >= 1 or similar)."""


class NegativeDenominator(CavmemError, ArithmeticError):
    pass


class FitDegenerate(CavmemError, ValueError):
    """Too few usable points for a log-linear decay fit."""


class ConfigError(CavmemError, ValueError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ClampedTimingWarning(UserWarning):
    """A perturbed pulse duration went negative and was clamped to zero."""
