"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Inputs built for different models (e.g. mismatched curvature)."""


class DomainError(ValueError):
    """Argument outside the domain of a formula (t <= 0, Im z <= 0, r = 0 ...)."""


class NormalizationError(ValueError):
    """A tangent vector that was required to be unit is not."""


class ConfigError(ValueError):
    """Invalid experiment or simulation configuration."""


class UnsupportedModelError(ValueError):
    """Operation not available for the requested model."""


class NumericError(RuntimeError):
    """Quadrature, root finding or iteration failed to converge."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics
