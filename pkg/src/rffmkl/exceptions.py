"""Exception hierarchy shared by all modules."""


class RffMklError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(RffMklError, ValueError):
    pass


class ManifestError(ConfigurationError):
    pass


class ParseError(RffMklError, ValueError):
    pass


class LabelError(RffMklError, ValueError):
    pass


class ShapeError(RffMklError, ValueError):
    pass


class SplitError(RffMklError, ValueError):
    pass


class ParameterError(RffMklError, ValueError):
    pass


class NumericError(RffMklError, ArithmeticError):
    pass


class InvariantError(RffMklError, RuntimeError):
    pass


class UndefinedMetricError(RffMklError, ValueError):
    pass


class TrialError(RffMklError, RuntimeError):
    """A repeated-trial run failed; ``trial`` holds the failing index."""

    def __init__(self, trial, cause):
        super().__init__(f"trial {trial} failed: {cause}")
        self.trial = trial
        self.cause = cause
