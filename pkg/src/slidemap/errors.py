"""Exception hierarchy shared by all modules.

Three top-level families map onto the CLI exit codes: configuration
problems (exit 2), data problems (exit 3) and numerical/statistical
problems (exit 4).
"""


class SlidemapError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(SlidemapError):
    """Invalid configuration, parameters or preconditions chosen by the caller."""

    exit_code = 2


class ParameterError(ConfigError):
    """A numeric parameter is out of its documented range."""


class DataError(SlidemapError):
    """Input data is malformed, misaligned or insufficient."""

    exit_code = 3


class FormatError(DataError):
    """A file or header does not follow the documented format."""


class CorruptFileError(DataError):
    """Header and payload disagree, or a payload is truncated."""


class AlignmentError(DataError):
    """Two grids that must share a header do not."""


class SchemaError(DataError):
    """Named layers or columns do not match the expected schema."""


class InputError(DataError):
    """An in-memory argument violates a documented precondition."""


class SamplingError(DataError):
    """A sample draw cannot be satisfied by the available pixels."""


class AllocationError(DataError):
    """A per-class or per-subclass allocation exceeds the pool depth."""

    def __init__(self, message, subclass=None):
        super().__init__(message)
        self.subclass = subclass


class StatsError(SlidemapError):
    """A statistical computation is degenerate or undefined."""

    exit_code = 4


class FitError(StatsError):
    """A regression fit has too few points or zero predictor variance."""


class DiagnosticError(StatsError):
    """A diagnostic statistic is undefined for the given input."""


class TrainingError(StatsError):
    """Classifier training received degenerate data."""


class StageError(SlidemapError):
    """Wraps an error with the name of the pipeline stage that raised it."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
