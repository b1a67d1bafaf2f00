"""
FirmCast - Exceptions

Error hierarchy shared by every pipeline stage.
"""

from typing import Optional


class FirmCastError(Exception):
    """Base exception for all FirmCast errors."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


class SchemaError(FirmCastError):
    """Input file does not match the indicator registry or misses mandatory columns."""


class IntegrityError(FirmCastError):
    """Duplicate (company_id, fiscal_year) rows or similar structural corruption."""


class DegeneratePanelError(FirmCastError):
    """A preprocessing step left nothing to work with."""


class CoverageError(FirmCastError):
    """The CPI series does not cover a year present in the panel."""


class AnomalyLeakError(FirmCastError):
    """A nonpositive value reached the log transform."""


class TransformStateError(FirmCastError):
    """Operation applied to a panel in the wrong transform state."""


class RankDeficiencyError(FirmCastError):
    """Regressor has zero variance."""


class IncompleteParamsError(FirmCastError):
    """A mandatory scaling fit (liability or income) could not be produced."""


class SingularityError(FirmCastError):
    """The growth-equation denominator vanished."""

    def __init__(self, assets: float, denominator: float):
        self.assets = assets
        self.denominator = denominator
        super().__init__(f"growth denominator D(A)={denominator:.3e} below guard at A={assets:.6e}")


class DomainError(FirmCastError):
    """Assets outside the domain of the growth equation."""


class MissingFitError(FirmCastError):
    """No scaling fit for the requested indicator."""


class ConfigurationError(FirmCastError):
    """Shapes, dimensions or options are inconsistent."""


class NumericError(FirmCastError):
    """Non-finite activation inside the recurrent network."""


class TrainingError(FirmCastError):
    """Training diverged."""

    def __init__(self, message: str, epoch: Optional[int] = None):
        self.epoch = epoch
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)


class InsufficientDataError(FirmCastError):
    """Not enough observations to fit a model."""


class SplitError(FirmCastError):
    """Dataset cannot be split as requested."""


class UndefinedMetricError(FirmCastError):
    """Metric requested on an empty sample."""


class DegenerateSpectrumError(FirmCastError):
    """Covariance rank is below the requested number of components."""


class GenerationError(FirmCastError):
    """Synthetic generation hit a singular growth equation."""

    def __init__(self, message: str, year: Optional[int] = None):
        self.year = year
        if year is not None:
            message = f"year {year}: {message}"
        super().__init__(message)


class PipelineError(FirmCastError):
    """A CLI stage failed."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {message}")
