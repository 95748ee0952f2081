"""Exception hierarchy shared by all signalgauge modules."""


class SignalGaugeError(Exception):
    """Base class for every error raised by this package."""


# dataset io
class DatasetFormatError(SignalGaugeError):
    pass


class BadMagic(DatasetFormatError):
    pass


class TruncatedFile(DatasetFormatError):
    pass


class CountMismatch(DatasetFormatError):
    pass


class BadLabel(SignalGaugeError, ValueError):
    pass


class InsufficientData(SignalGaugeError, ValueError):
    pass


class EmptyDataset(SignalGaugeError, ValueError):
    pass


class UnknownDataset(SignalGaugeError, KeyError):
    pass


# metrics
class DomainError(SignalGaugeError, ValueError):
    pass


class EmptyImage(SignalGaugeError, ValueError):
    pass


class EmptySequence(SignalGaugeError, ValueError):
    pass


class ZeroNoise(SignalGaugeError, ArithmeticError):
    """Pixel standard deviation is zero, so the SNR is undefined."""


# architecture / engine
class ShapeMismatch(SignalGaugeError, ValueError):
    pass


class GeometryExhausted(ShapeMismatch):
    """Requested depth would shrink a spatial dimension below one pixel."""


class BudgetExceeded(SignalGaugeError, ValueError):
    pass


# statistics
class LengthMismatch(SignalGaugeError, ValueError):
    pass


class TooFewSamples(SignalGaugeError, ValueError):
    pass
