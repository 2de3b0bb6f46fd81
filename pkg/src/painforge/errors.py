"""Exception types shared across the toolkit."""


class PainforgeError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(PainforgeError):
    """Array shapes are inconsistent with an operation's contract."""


class NumericError(PainforgeError):
    """A NaN or Inf appeared where finite values are required."""


class ParameterError(PainforgeError):
    """A scalar argument is outside its allowed range."""


class LabelError(PainforgeError):
    """A class label is outside [0, num_classes)."""


class GeometryError(PainforgeError):
    """A mesh is degenerate or topologically incompatible."""


class ConfigError(PainforgeError):
    """A configuration is inconsistent or cannot be parsed."""


class DataError(PainforgeError):
    """A dataset or manifest is missing required content."""


class MetricError(PainforgeError):
    """A metric is undefined for the given inputs."""


class IntegrityError(PainforgeError):
    """A reproducibility or leakage check failed."""
