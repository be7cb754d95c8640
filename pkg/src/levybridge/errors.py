"""Exception hierarchy shared by all modules."""


class LevyBridgeError(Exception):
    """Base class for errors raised by this package."""


class ParameterDomainError(LevyBridgeError, ValueError):
    """A model or law parameter lies outside its admissible domain."""


class TailNotDecayedError(LevyBridgeError, ArithmeticError):
    """``exp(t psi(u))`` did not fall below the tail tolerance before the cutoff cap."""


class AccuracyError(LevyBridgeError, ArithmeticError):
    """A numerical result violated an accuracy guard (e.g. large negative density lobes)."""


class GridMismatchError(LevyBridgeError, ValueError):
    """Two density tables do not share the same grid."""


class DenominatorUnderflowError(LevyBridgeError, ArithmeticError):
    """A density in a ratio is numerically zero, so the conditioning point is unreachable."""


class TimeOrderError(LevyBridgeError, ValueError):
    """Times were not given in the required strict order."""


class ZeroNormalizerError(LevyBridgeError, ArithmeticError):
    """A posterior normalizer vanished: the observation is inconsistent with every surviving length."""


class InvalidObservationError(LevyBridgeError, ValueError):
    """An observation pattern is impossible, e.g. a value other than ``z`` after absorption."""
