class SatEdgeError(Exception):
    """Base class for library errors."""


class DegenerateInputError(SatEdgeError, ValueError):
    """Input is too small or otherwise has no usable content."""


class NumericInstabilityError(SatEdgeError, ArithmeticError):
    """An iterative filter produced non-finite values."""


class UndefinedScoreError(SatEdgeError, ValueError):
    """A score was requested for a ground truth with no edge pixels."""


class ConfigError(SatEdgeError, ValueError):
    """Invalid pipeline configuration or stage order."""


class StageError(SatEdgeError):
    """A pipeline stage failed; ``stage`` names the culprit."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


class DegenerateChannelWarning(UserWarning):
    """White balance skipped because a channel is entirely black."""


class DegenerateRangeWarning(UserWarning):
    """Intensity remap skipped because the raster is constant."""
