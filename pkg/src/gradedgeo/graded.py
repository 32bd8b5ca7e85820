"""Metrics extended by one odd direction with positive weight.

An extended metric is a base metric together with a log-weight function:
the odd direction has squared norm ``exp(2*theta)`` and is orthogonal to
every ordinary vector.  The module carries the compatible torsion-free
connection (a triple: base connection, a 1-form, a vector field), the
curvature blocks that survive the grading, extended Ricci/scalar and
Hessian with their traces, field-equation residuals, the matter-sector
stress tensor and its conservation residual, and the curvature action
with its first variation (closed form and finite difference).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import exprfield as ef
from . import riemann as rm
from .algebroid import GradedVectorField, bracket, vector_apply
from .exprfield import ChartSpec, ScalarField
from .quadrature import QuadSpec, tensor_rule
from .riemann import MetricSpec, TensorValue

__all__ = [
    "FieldEquationReport",
    "GradedConnectionTriple",
    "GradedMetric",
    "GradedTensorValue",
    "GradedVectorValue",
    "VariationSpec",
    "action_first_variation",
    "bump_variation",
    "conservation_residual_at",
    "field_residuals_at",
    "graded_apply",
    "graded_apply_field",
    "graded_curvature_at",
    "graded_hessian_at",
    "graded_ricci_at",
    "graded_scalar_at",
    "graded_torsion",
    "graded_trace",
    "hilbert_action",
    "levicivita_triple",
    "stress_fields",
    "stress_tensor_at",
    "tilde_T_at",
    "tr_tilde_T_at",
]

VARIATION_STEP = 1e-4
CURVATURE_BLOCKS = ("even_even", "even_odd", "odd_even", "odd_odd")


@dataclass(frozen=True)
class GradedMetric:
    """Base metric plus the log-weight of the odd direction."""

    metric: MetricSpec
    theta: ScalarField
    odd_norm_sign: int = 1

    def __post_init__(self):
        if self.theta.chart != self.metric.chart:
            raise ValueError("theta lives on a different chart than the metric")
        if self.odd_norm_sign != 1:
            # the compatible-connection construction needs exp(2*theta) > 0
            raise ValueError("odd direction must have positive squared norm")

    @property
    def chart(self) -> ChartSpec:
        return self.metric.chart

    def weight(self) -> ScalarField:
        """Squared norm of the odd direction, exp(2*theta)."""
        return ef.exp(self.theta + self.theta)


@dataclass(frozen=True)
class GradedConnectionTriple:
    """Base connection of the metric, plus the two structure pieces.

    ``alpha`` multiplies odd arguments in the even-direction derivative,
    ``alpha_prime`` the odd operand; the compatible torsion-free triple
    has both equal.  ``x0`` is the derivative of the odd frame along
    itself.  Components are symbolic fields.
    """

    metric: GradedMetric
    alpha: tuple[ScalarField, ...]
    x0: tuple[ScalarField, ...]
    alpha_prime: tuple[ScalarField, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(self.alpha))
        object.__setattr__(self, "x0", tuple(self.x0))
        if self.alpha_prime is None:
            object.__setattr__(self, "alpha_prime", self.alpha)
        else:
            object.__setattr__(self, "alpha_prime", tuple(self.alpha_prime))
        n = self.metric.chart.dim
        for name, fields in (("alpha", self.alpha), ("x0", self.x0), ("alpha_prime", self.alpha_prime)):
            if len(fields) != n:
                raise ValueError(f"{name} needs {n} components")

    @property
    def chart(self) -> ChartSpec:
        return self.metric.chart


@dataclass(frozen=True, eq=False)
class GradedVectorValue:
    """Even components plus odd coefficient at a point."""

    even: np.ndarray
    odd: float
    base_point: tuple

    def max_norm(self) -> float:
        return max(float(np.max(np.abs(self.even))), abs(self.odd))


@dataclass(frozen=True, eq=False)
class GradedTensorValue:
    """Symmetric-bilinear-form value split along the grading."""

    even: TensorValue
    cross: np.ndarray
    odd: float
    base_point: tuple

    def max_norm(self) -> float:
        return max(
            float(np.max(np.abs(self.even.components))),
            float(np.max(np.abs(self.cross))) if self.cross.size else 0.0,
            abs(self.odd),
        )


@dataclass(frozen=True)
class FieldEquationReport:
    """Max-norm residuals of the four field-equation forms at one point."""

    point: tuple
    e27: float
    e28: float
    e29: float
    e44: float
    scalar_curvature: float
    graded_scalar: float

    @property
    def e30(self) -> float:
        # the second equation of the reduced pair is the same scalar condition
        return self.e28

    def to_json_dict(self) -> dict:
        return {
            "point": [float(x) for x in self.point],
            "e27": self.e27,
            "e28": self.e28,
            "e29": self.e29,
            "e44": self.e44,
            "scalar_curvature": self.scalar_curvature,
            "graded_scalar": self.graded_scalar,
        }


@lru_cache(maxsize=None)
def levicivita_triple(gm: GradedMetric) -> GradedConnectionTriple:
    """The unique compatible torsion-free triple of the extended metric."""
    n = gm.chart.dim
    theta = gm.theta
    alpha = tuple(theta.d(i) for i in range(n))
    ginv = gm.metric.inverse_fields()
    weight = gm.weight()
    zero = ef.constant(gm.chart, 0.0)
    x0 = []
    for i in range(n):
        acc = zero
        for j in range(n):
            if ginv[i][j].is_zero or alpha[j].is_zero:
                continue
            acc = acc + ginv[i][j] * alpha[j]
        x0.append(-(weight * acc) if not acc.is_zero else zero)
    return GradedConnectionTriple(gm, alpha, tuple(x0))


def graded_apply_field(
    conn: GradedConnectionTriple, xh: GradedVectorField, yh: GradedVectorField
) -> GradedVectorField:
    """Covariant derivative of ``yh`` along ``xh``, symbolically."""
    chart = conn.chart
    if xh.chart != chart or yh.chart != chart:
        raise ValueError("fields live on a different chart than the connection")
    n = chart.dim
    gamma = conn.metric.metric.christoffel_fields()
    X, h = xh.even, xh.odd
    Y, k = yh.even, yh.odd
    even = []
    for c in range(n):
        acc = vector_apply(X, Y[c])
        for i in range(n):
            if X[i].is_zero:
                continue
            for j in range(n):
                if gamma[c][i][j].is_zero or Y[j].is_zero:
                    continue
                acc = acc + gamma[c][i][j] * X[i] * Y[j]
        if not (h.is_zero or k.is_zero or conn.x0[c].is_zero):
            acc = acc + h * k * conn.x0[c]
        even.append(acc)
    odd = vector_apply(X, k)
    for i in range(n):
        if not (k.is_zero or conn.alpha_prime[i].is_zero or X[i].is_zero):
            odd = odd + k * conn.alpha_prime[i] * X[i]
        if not (h.is_zero or conn.alpha[i].is_zero or Y[i].is_zero):
            odd = odd + h * conn.alpha[i] * Y[i]
    return GradedVectorField(tuple(even), odd)


def _field_value(v: GradedVectorField, p) -> GradedVectorValue:
    return GradedVectorValue(
        np.array([c(p) for c in v.even]), v.odd(p), tuple(float(x) for x in p)
    )


def graded_apply(
    conn: GradedConnectionTriple, xh: GradedVectorField, yh: GradedVectorField, p
) -> GradedVectorValue:
    return _field_value(graded_apply_field(conn, xh, yh), p)


def graded_torsion(
    conn: GradedConnectionTriple, xh: GradedVectorField, yh: GradedVectorField, p
) -> GradedVectorValue:
    t = (
        graded_apply_field(conn, xh, yh)
        - graded_apply_field(conn, yh, xh)
        - bracket(xh, yh)
    )
    return _field_value(t, p)


def tilde_T_at(gm: GradedMetric, p) -> TensorValue:
    """Covariant second derivative of theta plus the squared slope form."""
    hes = rm.hessian_at(gm.metric, gm.theta, p).components
    dth = ef.eval_jet(gm.theta, p, 1).gradient()
    return TensorValue(("d", "d"), hes + np.outer(dth, dth), tuple(float(x) for x in p))


def tr_tilde_T_at(gm: GradedMetric, p) -> float:
    dth = ef.eval_jet(gm.theta, p, 1).gradient()
    ginv = rm.metric_at(gm.metric, p)[1].components
    return rm.laplacian_at(gm.metric, gm.theta, p) + float(dth @ ginv @ dth)


def graded_curvature_at(gm: GradedMetric, block: str, p) -> np.ndarray:
    """One curvature block, keyed by parity of (second argument, operand).

    even_even: full base curvature array [output, arg1, arg2, operand].
    even_odd:  odd coefficient of the curvature on an odd operand,
               antisymmetric [arg1, arg2]; vanishes for compatible triples.
    odd_even:  odd coefficient for odd second argument, [arg1, operand].
    odd_odd:   even components for odd second argument and operand,
               [arg1, output].
    """
    conn = levicivita_triple(gm)
    n = gm.chart.dim
    if block == "even_even":
        return rm.riemann_at(gm.metric, p).components
    if block == "even_odd":
        da = np.array([ef.eval_jet(a, p, 1).gradient() for a in conn.alpha])
        # da[j, i] = d_i alpha_j; output is d_i alpha_j - d_j alpha_i
        return da.T - da
    if block == "odd_even":
        da = np.array([ef.eval_jet(a, p, 1).gradient() for a in conn.alpha])
        aval = np.array([a(p) for a in conn.alpha])
        gamma = rm.christoffel_at(gm.metric, p).components
        return da.T - np.einsum("mik,m->ik", gamma, aval) + np.outer(aval, aval)
    if block == "odd_odd":
        dx0 = np.array([ef.eval_jet(c, p, 1).gradient() for c in conn.x0])
        x0val = np.array([c(p) for c in conn.x0])
        aval = np.array([a(p) for a in conn.alpha])
        gamma = rm.christoffel_at(gm.metric, p).components
        nabla = dx0.T + np.einsum("kim,m->ik", gamma, x0val)
        return nabla - np.outer(aval, x0val)
    raise ValueError(f"unknown curvature block {block!r}; use one of {CURVATURE_BLOCKS}")


def graded_ricci_at(gm: GradedMetric, p) -> GradedTensorValue:
    """Ricci form of the extended metric, split along the grading."""
    pt = tuple(float(x) for x in p)
    n = gm.chart.dim
    ric = rm.ricci_at(gm.metric, p).components
    even = TensorValue(("d", "d"), ric - tilde_T_at(gm, p).components, pt)
    odd = -float(np.exp(2.0 * gm.theta(p))) * tr_tilde_T_at(gm, p)
    return GradedTensorValue(even, np.zeros(n), odd, pt)


def graded_scalar_at(gm: GradedMetric, p) -> float:
    return rm.scalar_curvature_at(gm.metric, p) - 2.0 * tr_tilde_T_at(gm, p)


def graded_hessian_at(gm: GradedMetric, f: ScalarField, p) -> GradedTensorValue:
    """Second covariant derivative of an ordinary function, graded blocks."""
    pt = tuple(float(x) for x in p)
    even = rm.hessian_at(gm.metric, f, p)
    df = ef.eval_jet(f, p, 1).gradient()
    dth = ef.eval_jet(gm.theta, p, 1).gradient()
    ginv = rm.metric_at(gm.metric, p)[1].components
    odd = float(np.exp(2.0 * gm.theta(p))) * float(df @ ginv @ dth)
    return GradedTensorValue(even, np.zeros(gm.chart.dim), odd, pt)


def graded_trace(gm: GradedMetric, value: GradedTensorValue) -> float:
    """Trace against the extended metric (odd block weighted by 1/weight)."""
    p = value.base_point
    ginv = rm.metric_at(gm.metric, p)[1].components
    even = float(np.einsum("ij,ij->", ginv, value.even.components))
    return even + value.odd / float(np.exp(2.0 * gm.theta(p)))


@lru_cache(maxsize=None)
def stress_fields(gm: GradedMetric) -> tuple[tuple[ScalarField, ...], ...]:
    """Matter-sector stress tensor 2 dtheta x dtheta - |grad theta|^2 g."""
    n = gm.chart.dim
    theta = gm.theta
    dth = [theta.d(i) for i in range(n)]
    ginv = gm.metric.inverse_fields()
    zero = ef.constant(gm.chart, 0.0)
    gradsq = zero
    for a in range(n):
        if dth[a].is_zero:
            continue
        for b in range(n):
            if ginv[a][b].is_zero or dth[b].is_zero:
                continue
            gradsq = gradsq + ginv[a][b] * dth[a] * dth[b]
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            entry = 2.0 * (dth[i] * dth[j]) - gradsq * gm.metric.component(i, j)
            row.append(entry)
        rows.append(tuple(row))
    return tuple(rows)


def stress_tensor_at(gm: GradedMetric, p) -> TensorValue:
    rows = stress_fields(gm)
    comps = np.array([[f(p) for f in row] for row in rows])
    return TensorValue(("d", "d"), comps, tuple(float(x) for x in p))


def conservation_residual_at(gm: GradedMetric, p) -> TensorValue:
    """Covariant divergence of the stress tensor, as a 1-form value."""
    return rm.divergence_sym2_at(gm.metric, stress_fields(gm), p)


def field_residuals_at(gm: GradedMetric, p) -> FieldEquationReport:
    """Residuals of the four equivalent field-equation forms at a point."""
    pt = tuple(float(x) for x in p)
    g, ginv_t = rm.metric_at(gm.metric, p)
    gv, ginv = g.components, ginv_t.components
    ric = rm.ricci_at(gm.metric, p).components
    scalar = float(np.einsum("ij,ij->", ginv, ric))
    dth = ef.eval_jet(gm.theta, p, 1).gradient()
    gradsq = float(dth @ ginv @ dth)
    lap = rm.laplacian_at(gm.metric, gm.theta, p)
    outer2 = 2.0 * np.outer(dth, dth)

    full = ric - 0.5 * scalar * gv - outer2 + gradsq * gv
    ricci_form = ric - outer2

    gric = graded_ricci_at(gm, p)
    ghes = graded_hessian_at(gm, gm.theta, p)
    even_blk = gric.even.components - (np.outer(dth, dth) - ghes.even.components)
    cross_blk = gric.cross - (0.0 - ghes.cross)
    odd_blk = gric.odd - (0.0 - ghes.odd)

    return FieldEquationReport(
        point=pt,
        e27=float(np.max(np.abs(full))),
        e28=abs(lap),
        e29=float(np.max(np.abs(ricci_form))),
        e44=max(
            float(np.max(np.abs(even_blk))),
            float(np.max(np.abs(cross_blk))),
            abs(odd_blk),
        ),
        scalar_curvature=scalar,
        graded_scalar=scalar - 2.0 * (lap + gradsq),
    )


def _volume_density(gm: GradedMetric, p) -> float:
    g = rm.metric_at(gm.metric, p)[0].components
    return float(np.sqrt(abs(np.linalg.det(g))))


@dataclass(frozen=True, eq=False)
class _PointData:
    """Curvature and slope data shared by the quadrature integrands.

    Every array carries a leading quadrature-point axis.
    """

    g: np.ndarray
    ginv: np.ndarray
    ric: np.ndarray
    scalar: np.ndarray
    dth: np.ndarray
    lap: np.ndarray
    gradsq: np.ndarray
    density: np.ndarray


def _point_data(gm: GradedMetric, pts: np.ndarray) -> _PointData:
    g, ginv, gamma, riem = rm.curvature_data_batch(gm.metric, pts)
    ric = np.einsum("plljk->pjk", riem)
    scalar = np.einsum("pjk,pjk->p", ginv, ric)
    jet = ef.eval_jet_batch(gm.theta, pts, 2)
    dth = jet.gradient().T
    hes = np.moveaxis(jet.hessian(), -1, 0) - np.einsum("pkij,pk->pij", gamma, dth)
    lap = np.einsum("pij,pij->p", ginv, hes)
    gradsq = np.einsum("pi,pij,pj->p", dth, ginv, dth)
    density = np.sqrt(np.abs(np.linalg.det(g)))
    return _PointData(g, ginv, ric, scalar, dth, lap, gradsq, density)


def hilbert_action(gm: GradedMetric, quad: QuadSpec | None = None) -> float:
    """Integral of the extended scalar curvature against the metric volume."""
    quad = quad or QuadSpec()
    points, weights = tensor_rule(gm.chart, quad)
    d = _point_data(gm, np.asarray(points))
    values = (d.scalar - 2.0 * (d.lap + d.gradsq)) * d.density
    return float(values @ weights)


def action_magnitude(gm: GradedMetric, quad: QuadSpec | None = None) -> float:
    """Size scale for action values: the same integrand with both terms in
    absolute value, so it stays positive where the signed terms cancel."""
    quad = quad or QuadSpec()
    points, weights = tensor_rule(gm.chart, quad)
    d = _point_data(gm, np.asarray(points))
    values = (np.abs(d.scalar) + 2.0 * np.abs(d.lap + d.gradsq)) * d.density
    return float(values @ weights)


@dataclass(frozen=True)
class VariationSpec:
    """Symmetric perturbation of the base metric plus a log-weight bump.

    Both pieces must vanish on the boundary of the support box; this is
    sampled at construction just inside each face.
    """

    s: tuple[tuple[ScalarField, ...], ...]
    h: ScalarField
    support: tuple[tuple[float, float], ...]

    def __post_init__(self):
        chart = self.h.chart
        n = chart.dim
        rows = [list(r) for r in self.s]
        if len(rows) != n or any(len(r) != n for r in rows):
            raise ValueError(f"perturbation must be {n}x{n}")
        for i in range(n):
            for j in range(i + 1, n):
                if rows[i][j].expr != rows[j][i].expr:
                    raise ValueError(f"perturbation is not symmetric at ({i}, {j})")
        object.__setattr__(self, "s", tuple(tuple(r) for r in rows))
        support = tuple((float(lo), float(hi)) for lo, hi in self.support)
        object.__setattr__(self, "support", support)
        if len(support) != n:
            raise ValueError("support box dimension mismatch")
        for (lo, hi), (clo, chi) in zip(support, chart.box):
            if not (clo <= lo < hi <= chi):
                raise ValueError("support box must sit inside the chart box")
        worst = self._boundary_max()
        if worst > 1e-12:
            raise ValueError(f"variation does not vanish on the support boundary ({worst:.3e})")

    def _boundary_max(self, inset: float = 1e-9) -> float:
        chart = self.h.chart
        n = chart.dim
        fields = [self.h] + [self.s[i][j] for i in range(n) for j in range(i, n)]
        probes = []
        for axis in range(n):
            lo, hi = self.support[axis]
            pad = inset * (hi - lo)
            for edge in (lo + pad, hi - pad):
                base = []
                for a in range(n):
                    alo, ahi = self.support[a]
                    apad = 1e-6 * (ahi - alo)
                    base.append((alo + apad, 0.5 * (alo + ahi), ahi - apad))
                base[axis] = (edge,)
                probes.extend(_product_points(base))
        worst = 0.0
        for p in probes:
            for f in fields:
                worst = max(worst, abs(f(p)))
        return worst


def _product_points(axes: list[tuple]) -> list[tuple]:
    pts = [()]
    for choices in axes:
        pts = [p + (c,) for p in pts for c in choices]
    return pts


def bump_variation(
    chart: ChartSpec,
    support: tuple[tuple[float, float], ...],
    s_coeffs=None,
    h_coeff: float = 0.0,
) -> VariationSpec:
    """Variation with the standard smooth compactly-supported profile.

    ``s_coeffs`` is a symmetric matrix of amplitudes (None for a pure
    log-weight variation); every entry is that amplitude times the bump.
    """
    n = chart.dim
    profile = ef.constant(chart, 1.0)
    for axis, (lo, hi) in enumerate(support):
        x = ef.coordinate(chart, chart.coord_names[axis])
        u = (2.0 * x - (lo + hi)) / (hi - lo)
        profile = profile * ef.exp(-(1.0 / (1.0 - u * u)))
    zero = ef.constant(chart, 0.0)
    rows = [[zero] * n for _ in range(n)]
    if s_coeffs is not None:
        arr = np.asarray(s_coeffs, dtype=float)
        if arr.shape != (n, n) or not np.array_equal(arr, arr.T):
            raise ValueError("amplitude matrix must be symmetric and match the chart")
        for i in range(n):
            for j in range(i, n):
                if arr[i, j] != 0.0:
                    entry = float(arr[i, j]) * profile
                    rows[i][j] = entry
                    rows[j][i] = entry
    h = h_coeff * profile if h_coeff != 0.0 else zero
    return VariationSpec(tuple(tuple(r) for r in rows), h, support)


def _perturbed(gm: GradedMetric, var: VariationSpec, t: float) -> GradedMetric:
    n = gm.chart.dim
    base = gm.metric.component_fields()
    rows = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            entry = base[i][j]
            if not var.s[i][j].is_zero:
                entry = entry + t * var.s[i][j]
            rows[i][j] = entry
            rows[j][i] = entry
    metric = MetricSpec(gm.chart, rows)
    theta = gm.theta if var.h.is_zero else gm.theta + t * var.h
    return GradedMetric(metric, theta)


def action_first_variation(
    gm: GradedMetric,
    var: VariationSpec,
    quad: QuadSpec | None = None,
    step: float = VARIATION_STEP,
) -> tuple[float, float]:
    """Derivative of the action along a variation, two independent ways.

    Returns (closed_form, finite_difference).  Both integrate over the
    variation's support box only; outside it the integrand does not move.
    """
    quad = quad or QuadSpec()
    inner_quad = QuadSpec(quad.nodes_per_axis, var.support)
    points, weights = tensor_rule(gm.chart, inner_quad)
    pts = np.asarray(points)
    n = gm.chart.dim

    d = _point_data(gm, pts)
    flat = [var.s[i][j] for i in range(n) for j in range(n)]
    jets = ef.eval_jets_batch(flat + [var.h], pts, 0)
    s_vals = np.stack([j.coeffs[0] for j in jets[:-1]], axis=-1).reshape(len(pts), n, n)
    h_vals = jets[-1].coeffs[0]
    target = (
        -d.ric
        + (0.5 * d.scalar - d.gradsq)[:, None, None] * d.g
        + 2.0 * np.einsum("pi,pj->pij", d.dth, d.dth)
    )
    pairing = np.einsum("pia,pjb,pij,pab->p", d.ginv, d.ginv, s_vals, target)
    closed = float(((pairing + 4.0 * h_vals * d.lap) * d.density) @ weights)

    plus = hilbert_action(_perturbed(gm, var, step), inner_quad)
    minus = hilbert_action(_perturbed(gm, var, -step), inner_quad)
    return closed, (plus - minus) / (2.0 * step)
