"""Exception types shared across the package.

The command line tool maps these onto distinct exit codes, so keep the
hierarchy flat and specific.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class SamplingCheckError(RuntimeError):
    """Grid resolution cannot represent the amplified transverse band."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class EstimationError(RuntimeError):
    """An estimator denominator is not positive (insufficient statistics)."""
