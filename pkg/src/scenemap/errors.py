"""Exception hierarchy shared by every stage of the pipeline."""


class ScenemapError(Exception):
    """Base class; ``exit_code`` is what the command line returns for it."""

    exit_code = 1


class ConfigError(ScenemapError, ValueError):
    exit_code = 2


class DataError(ScenemapError, ValueError):
    exit_code = 3


class ModeMismatchError(ConfigError):
    """A checkpoint was asked to serve a condition kind it was not trained for."""

    exit_code = 4


class CheckpointError(ScenemapError):
    exit_code = 4


class DimensionError(ScenemapError, ValueError):
    exit_code = 2


class CategoryError(ScenemapError, ValueError):
    exit_code = 3


class StepError(ScenemapError, ValueError):
    exit_code = 2


class DistributionError(ScenemapError, ValueError):
    exit_code = 3


class InstanceError(ScenemapError, ValueError):
    exit_code = 3


class RetrievalError(ScenemapError, LookupError):
    exit_code = 3


class GeometryError(ScenemapError, ValueError):
    exit_code = 3


class MetricError(ScenemapError, ValueError):
    exit_code = 3


class PlacementError(ScenemapError, RuntimeError):
    exit_code = 3
