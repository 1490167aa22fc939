"""Exception hierarchy shared by every module of the package."""


class BRWREError(Exception):
    """Base class for all package errors."""


class BadPmf(BRWREError, ValueError):
    pass


class NonPositiveMean(BRWREError, ValueError):
    pass


class DomainError(BRWREError, ValueError):
    pass


class MeanNotZero(BRWREError, ValueError):
    pass


class SupportAbovePlusOne(BRWREError, ValueError):
    pass


class TrivialLaw(BRWREError, ValueError):
    pass


class MissingUpStep(BRWREError, ValueError):
    pass


class NotSubcritical(BRWREError, ValueError):
    pass


class BadWeights(BRWREError, ValueError):
    pass


class OutOfWindow(BRWREError, IndexError):
    pass


class CapacityError(BRWREError, RuntimeError):
    """A grid or buffer would exceed its configured budget."""


class NoSignChange(BRWREError, ValueError):
    pass


class TraceUnavailable(BRWREError, ValueError):
    pass


class Inconclusive(BRWREError, RuntimeError):
    """A truncated simulation cannot decide the requested event."""


class AllTruncated(Inconclusive):
    pass


class AlphaTooSmall(BRWREError, ValueError):
    pass


class NotClassIII(BRWREError, ValueError):
    pass


class RunawayError(BRWREError, RuntimeError):
    pass


class DegenerateFit(BRWREError, ValueError):
    pass


class MixedTargets(BRWREError, ValueError):
    pass


class ConfigError(BRWREError, ValueError):
    pass


class TruncationWarning(UserWarning):
    """A quantity was computed on a capped simulation and is only a bound."""
