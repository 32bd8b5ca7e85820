"""Exception types shared across the package."""


class GradedGeoError(Exception):
    """Base class for errors raised by gradedgeo."""


class ParseError(GradedGeoError):
    """Syntax or name error in a field expression, with source position."""

    def __init__(self, message: str, source: str = "", pos: int = -1):
        self.source = source
        self.pos = pos
        if pos >= 0:
            message = f"{message} (column {pos + 1})"
        super().__init__(message)


class DomainError(GradedGeoError):
    """Evaluation hit a singular elementary operation or left the chart box."""


class JetOrderError(GradedGeoError):
    """Requested jet order exceeds the configured maximum."""


class DegenerateMetricError(GradedGeoError):
    """Metric determinant below the degeneracy threshold at an evaluation point."""


class ConfigError(GradedGeoError):
    """Malformed or inconsistent run configuration."""
