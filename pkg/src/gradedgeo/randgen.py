"""Seeded random geometry generators for validation runs and property tests.

Metrics are polynomial perturbations of a constant-signature diagonal, scaled
so nondegeneracy and signature are stable across the chart box.
"""

from __future__ import annotations

import numpy as np

from . import exprfield as ef
from .exprfield import ChartSpec, ScalarField
from .riemann import MetricSpec


def default_chart(dim: int, half_width: float = 0.4) -> ChartSpec:
    names = ("x", "y", "z", "w", "v")[:dim]
    return ChartSpec(names, tuple((-half_width, half_width) for _ in range(dim)))


def random_polynomial(
    rng: np.random.Generator,
    chart: ChartSpec,
    degree: int = 2,
    scale: float = 0.1,
    bias: float = 0.0,
) -> ScalarField:
    coords = [ef.coordinate(chart, name) for name in chart.coord_names]
    f = ef.constant(chart, bias + float(rng.uniform(-scale, scale)))
    for _ in range(degree * chart.dim):
        mono = ef.constant(chart, float(rng.uniform(-scale, scale)))
        for _ in range(int(rng.integers(1, degree + 1))):
            mono = mono * coords[int(rng.integers(0, chart.dim))]
        f = f + mono
    return f


def random_metric(
    rng: np.random.Generator,
    chart: ChartSpec,
    signature: tuple[int, ...] | None = None,
    scale: float = 0.1,
) -> MetricSpec:
    """diag(signature) plus a symmetric random polynomial perturbation."""
    n = chart.dim
    if signature is None:
        signature = (1,) * n
    if len(signature) != n or any(s not in (-1, 1) for s in signature):
        raise ValueError(f"signature must be +-1 per coordinate, got {signature}")
    rows = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            pert = random_polynomial(rng, chart, degree=2, scale=scale)
            entry = pert + float(signature[i]) if i == j else pert
            rows[i][j] = entry
            rows[j][i] = entry
    return MetricSpec(chart, rows)


def random_graded_metric(
    rng: np.random.Generator,
    chart: ChartSpec,
    signature: tuple[int, ...] | None = None,
    scale: float = 0.1,
):
    from .graded import GradedMetric

    g = random_metric(rng, chart, signature, scale)
    theta = random_polynomial(rng, chart, degree=2, scale=0.5)
    return GradedMetric(g, theta)


def random_graded_field(rng: np.random.Generator, chart: ChartSpec, degree: int = 1, scale: float = 1.0):
    from .algebroid import GradedVectorField

    even = tuple(
        random_polynomial(rng, chart, degree=degree, scale=scale) for _ in chart.coord_names
    )
    odd = random_polynomial(rng, chart, degree=degree, scale=scale)
    return GradedVectorField(even, odd)


def random_dual_function(rng: np.random.Generator, chart: ChartSpec, degree: int = 2, scale: float = 1.0):
    from .algebroid import DualFunction

    return DualFunction(
        random_polynomial(rng, chart, degree=degree, scale=scale),
        random_polynomial(rng, chart, degree=degree, scale=scale),
    )


def random_interior_point(rng: np.random.Generator, chart: ChartSpec, margin: float = 0.15):
    return tuple(
        float(rng.uniform(lo + margin * (hi - lo), hi - margin * (hi - lo)))
        for lo, hi in chart.box
    )
