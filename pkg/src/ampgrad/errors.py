"""Exception types raised across the package."""


class AmpgradError(Exception):
    """Base class for all package errors."""


class GraphError(AmpgradError):
    """The computation graph is malformed (e.g. contains a cycle)."""


class StateError(AmpgradError):
    """An object was used in the wrong lifecycle state."""


class NumericError(AmpgradError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class ConfigError(AmpgradError, ValueError):
    """Invalid model, schedule, amplification or experiment configuration."""


class CifarFormatError(AmpgradError, ValueError):
    """A CIFAR-10 binary file does not follow the record layout."""
