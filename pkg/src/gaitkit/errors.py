"""Exception hierarchy shared across the toolkit."""


class GaitkitError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(GaitkitError):
    """Operands have incompatible or unsupported shapes."""


class TapeError(GaitkitError):
    """Misuse of the autodiff tape (e.g. backward on an empty tape)."""


class ConfigError(GaitkitError):
    """Invalid model, training, or stream configuration."""


class QuantError(GaitkitError):
    """Invalid quantization parameters or integer-path failure."""


class AccumulatorOverflow(QuantError):
    """An integer accumulator left the 32-bit range (mis-sized layer)."""


class DataError(GaitkitError):
    """Malformed or inconsistent session data."""


class TrainingError(GaitkitError):
    """Numeric failure during optimization (e.g. divergent loss)."""
