"""Coordinate-chart calculus for graded tangent bundles."""

from .exprfield import ChartSpec, parse_field
from .graded import GradedMetric, field_residuals_at
from .riemann import MetricSpec

__version__ = "0.1.0"

__all__ = [
    "ChartSpec",
    "GradedMetric",
    "MetricSpec",
    "field_residuals_at",
    "parse_field",
    "__version__",
]
