"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
2 for configuration problems, 3 for numerical failures, 4 for bad data.
"""

from __future__ import annotations


class ReflectDiffError(Exception):
    exit_code = 1


class ConfigurationError(ReflectDiffError, ValueError):
    exit_code = 2


class DomainError(ConfigurationError):
    """An argument lies outside the mathematical domain of an operation."""


class ResolutionError(ConfigurationError):
    """The grid is too coarse for the requested geometric feature."""


class NumericalError(ReflectDiffError, RuntimeError):
    exit_code = 3


class ConvergenceError(NumericalError):
    pass


class KernelQualityError(NumericalError):
    """A transition kernel failed a positivity or mass requirement."""


class TruncationError(NumericalError):
    pass


class TuningError(NumericalError):
    pass


class ExperimentError(ConfigurationError):
    pass


class CacheError(ReflectDiffError):
    exit_code = 2


class DataError(ReflectDiffError, ValueError):
    exit_code = 4


class InjectivityError(NumericalError):
    """Distinct diffusivities produced numerically identical transition operators."""
