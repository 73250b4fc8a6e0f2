"""Exception types shared across the package."""


class TaxruinError(Exception):
    """Base class for all package errors."""


class DomainError(TaxruinError):
    """Argument outside the analytic domain of an exponent or transform."""


class NoPositiveRoot(TaxruinError):
    """The adjustment-coefficient equation has no positive root (no safety loading)."""


class UnsupportedModel(TaxruinError):
    """Operation not defined for this model variant."""


class FactorizationError(TaxruinError):
    """Failed to isolate the real roots of the rational characteristic equation."""


class ParameterError(TaxruinError):
    """Penalty parameters violate a hypothesis of the limit formula."""


class MixedBatchError(TaxruinError):
    """Records from incompatible runs were combined."""


class NoRuinsError(TaxruinError):
    """A conditional estimator received a batch with no ruined paths."""


class StepLimitExceeded(TaxruinError):
    """A single path exceeded the event-count safety valve."""


class NeedsEmpiricalUpsilon(TaxruinError):
    """The Cramer constant for this model must be calibrated empirically."""


class ConfigError(TaxruinError):
    """Experiment configuration failed validation."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
