"""Release gate: ten end-to-end checks, one test per criterion.

Tolerances, case counts, and runtime budgets are fixed contracts; loosening
them is an interface change, not a test tweak.  Each test prints a one-line
summary with the measured maxima (visible with -s or on failure).
"""

import functools
import time

import numpy as np

from gradedgeo import algebroid as ag
from gradedgeo import cosmo as co
from gradedgeo import exprfield as ef
from gradedgeo import graded as gd
from gradedgeo import riemann as rm
from gradedgeo import validate as vd
from gradedgeo.quadrature import QuadSpec
from gradedgeo.randgen import (
    default_chart,
    random_dual_function,
    random_graded_field,
    random_graded_metric,
    random_interior_point,
    random_polynomial,
)

from expr_samples import FUNCTION_CLASSES, sample_chart, sample_expression, sample_points
from fd_oracles import fd_partial, fd_second


def _line(num, detail):
    print(f"criterion {num:02d} PASS: {detail}")


@functools.lru_cache(maxsize=1)
def shared_random_set():
    """20 random graded metrics with a sample point each, reused by 02 and 03."""
    rng = np.random.default_rng(20260814)
    out = []
    for k in range(20):
        dim = 3 if k % 4 == 0 else 2
        chart = default_chart(dim)
        signature = ((-1,) + (1,) * (dim - 1)) if k % 2 == 0 else None
        gm = random_graded_metric(rng, chart, signature=signature)
        out.append((gm, random_interior_point(rng, chart)))
    return tuple(out)


def test_c01_power_law_solution_residuals():
    t0 = time.perf_counter()
    worst = 0.0
    for n in (2, 3, 4):
        gm = co.warped_graded_metric(co.eds_warped(n))
        spatial = tuple(0.1 * (k + 1) for k in range(n))
        for t in np.linspace(0.5, 4.0, 20):
            rep = gd.field_residuals_at(gm, spatial + (float(t),))
            worst = max(worst, rep.e27, rep.e28, rep.e29, rep.e44)
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-9, worst
    assert elapsed < 5.0, elapsed
    _line(1, f"n=2,3,4 on 20-point t-grid [0.5,4]: max residual {worst:.3e}, {elapsed:.2f}s")


def test_c02_koszul_matches_connection_triple():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for gm, _ in shared_random_set():
        res = vd.check_koszul_vs_triple(gm, rng, trials=10)
        assert res.passed and res.tolerance == 1e-9, res
        worst = max(worst, res.max_error)
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0, elapsed
    _line(2, f"20 metrics x 10 triples: max rel err {worst:.3e}, {elapsed:.2f}s")


def test_c03_frame_summed_curvature_matches_closed_forms():
    worst = 0.0
    for gm, pt in shared_random_set():
        for res in (vd.check_ricci_blocks_frame(gm, [pt]), vd.check_scalar_frame(gm, [pt])):
            assert res.passed and res.tolerance == 1e-9, res
            worst = max(worst, res.max_error)
    _line(3, f"frame-summed blocks and scalar on the shared set: max err {worst:.3e}")


def test_c04_harmonic_potential_conservation():
    square = ef.ChartSpec(("x", "y"), ((-1.0, 1.0), (-1.0, 1.0)))
    flat = rm.MetricSpec.diagonal(square, [1.0, 1.0])
    conf = "exp(0.2*(x^2 + y^2))"  # scalar curvature -0.8/conf, so genuinely curved
    curved = rm.MetricSpec.diagonal(square, [conf, conf])
    eds = co.warped_graded_metric(co.eds_warped(3))
    pts2 = [(0.3, -0.4), (-0.6, 0.1), (0.05, 0.7), (-0.2, -0.5)]
    pts4 = [(0.2, -0.3, 0.4, 0.7), (0.0, 0.1, -0.2, 1.3), (-0.4, 0.3, 0.0, 2.5), (0.1, 0.0, 0.2, 3.6)]
    cases = [
        (gd.GradedMetric(flat, ef.parse_field("0.7*x + 0.2*y", square)), pts2),
        (gd.GradedMetric(flat, ef.parse_field("x*y", square)), pts2),
        (gd.GradedMetric(flat, ef.parse_field("x^2 - y^2", square)), pts2),
        (gd.GradedMetric(curved, ef.parse_field("x*y", square)), pts2),
        (eds, pts4),
    ]
    worst = 0.0
    for gm, pts in cases:
        for p in pts:
            worst = max(worst, float(np.max(np.abs(gd.conservation_residual_at(gm, p).components))))
    assert worst <= 1e-9, worst

    # non-harmonic control: residual must equal 2*lap(theta)*dtheta = (8x, 0)
    control = gd.GradedMetric(flat, ef.parse_field("x^2", square))
    ctrl_err = 0.0
    for x, y in pts2:
        res = gd.conservation_residual_at(control, (x, y)).components
        ctrl_err = max(ctrl_err, float(np.max(np.abs(res - np.array([8.0 * x, 0.0])))))
    assert ctrl_err <= 1e-9, ctrl_err
    _line(4, f"5 harmonic potentials: max divergence {worst:.3e}; control err {ctrl_err:.3e}")


def test_c05_field_equation_forms_agree():
    tol = 1e-9
    rng = np.random.default_rng(5)
    eds3 = co.warped_graded_metric(co.eds_warped(3))
    eds2 = co.warped_graded_metric(co.eds_warped(2))
    chart3 = default_chart(3)
    vacuum = gd.GradedMetric(rm.MetricSpec.diagonal(chart3, [-1.0, 1.0, 1.0]), ef.constant(chart3, 0.3))
    configs = [
        (eds3, (0.1, -0.3, 0.2, 1.7)),
        (eds3, (0.0, 0.0, 0.0, 0.8)),
        (eds2, (0.1, -0.1, 2.0)),
        (vacuum, (0.1, 0.0, -0.2)),
    ]
    for _ in range(3):
        configs.append((random_graded_metric(rng, chart3), random_interior_point(rng, chart3)))
    verdicts = []
    for gm, p in configs:
        rep = gd.field_residuals_at(gm, p)
        pair_a = max(rep.e27, rep.e28) <= tol
        pair_b = max(rep.e29, rep.e30) <= tol
        single = rep.e44 <= tol
        assert pair_a == pair_b == single, (p, rep.to_json_dict())
        verdicts.append(single)
    assert True in verdicts and False in verdicts, verdicts
    _line(5, f"{len(configs)} configs (dim>=3): forms agree, {verdicts.count(True)} solutions / {verdicts.count(False)} non-solutions")


def test_c06_action_critical_at_solution():
    gm = co.warped_graded_metric(co.eds_warped(3, half_width=1.0))
    support = ((-0.5, 0.5),) * 3 + ((0.9, 1.9),)
    # the signed action integrand cancels pointwise on the solution, so the
    # scale comes from the term magnitudes, not from the action value itself
    scale = gd.action_magnitude(gm, QuadSpec(8, support))
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(10):
        coeffs = rng.uniform(-1.0, 1.0, size=(4, 4))
        coeffs = 0.5 * (coeffs + coeffs.T)
        var = gd.bump_variation(gm.chart, support, coeffs, float(rng.uniform(-1.0, 1.0)))
        closed, _ = gd.action_first_variation(gm, var, QuadSpec(6))
        worst = max(worst, abs(closed))
    assert worst <= 1e-8 * scale, (worst, scale)

    # away from a solution the closed form must track the finite difference
    chart2 = default_chart(2)
    gm2 = gd.GradedMetric(
        rm.MetricSpec.diagonal(chart2, ["1 + 0.3*x^2", "1 + 0.2*y^2"]),
        ef.parse_field("0.4*y", chart2),
    )
    support2 = ((-0.3, 0.3), (-0.3, 0.3))
    sizes = []
    gap = 0.0
    for _ in range(3):
        coeffs = rng.uniform(-1.0, 1.0, size=(2, 2))
        coeffs = 0.5 * (coeffs + coeffs.T)
        var = gd.bump_variation(chart2, support2, coeffs, float(rng.uniform(-1.0, 1.0)))
        closed, fdv = gd.action_first_variation(gm2, var, QuadSpec(56))
        gap = max(gap, abs(closed - fdv) / (1 + abs(closed)))
        sizes.append(abs(closed))
    assert gap <= 1e-5, gap
    assert max(sizes) > 1e-6, sizes  # the probe metric is genuinely non-critical
    _line(6, f"10 bumps at the solution: max |dS| {worst:.3e} (scale {scale:.3f}); off-solution rel gap {gap:.3e}")


def test_c07_warped_closed_forms_match_engine():
    rng = np.random.default_rng(7)
    flat3 = rm.MetricSpec.diagonal(ef.ChartSpec(("x", "y", "z"), ((-2.0, 2.0),) * 3), [1.0, 1.0, 1.0])
    bases = [(flat3, [(0.3, -0.4, 0.5, 1.3), (-0.7, 0.2, -0.1, 2.9)]),
             (co.unit_sphere_base(), [(0.8, 0.4, 1.7), (2.1, -1.2, 3.3)])]
    worst = 0.0
    for base, pts in bases:
        for _ in range(3):
            tch = co.time_chart((0.2, 6.0))
            tc = ef.coordinate(tch, "t")
            cs = rng.uniform(-0.3, 0.3, 3)
            a = cs[0] * tc + cs[1] * ef.sin(tc) + cs[2] * ef.ln(tc)
            w = co.WarpedSpec(base, a, float(rng.uniform(-0.5, 0.5)) * tc)
            m = co.build_warped_metric(w)
            for p in pts:
                cf = co.warped_closed_forms(w, p)
                worst = max(
                    worst,
                    float(np.max(np.abs(rm.christoffel_at(m, p).components - cf.gamma))),
                    float(np.max(np.abs(rm.riemann_at(m, p).components - cf.riemann))),
                    float(np.max(np.abs(rm.ricci_at(m, p).components - cf.ricci))),
                )
    assert worst <= 1e-9, worst
    _line(7, f"random warp on flat and sphere bases: max closed-form vs engine err {worst:.3e}")


def test_c08_scale_factor_ode_accuracy():
    worst = 0.0
    for n in (2, 3, 4):
        _, _, c = co.eds_solution(n)
        traj = co.integrate_scale_factor(co.OdeState(1.0, 0.0, 1.0 / n, 0.0), c, 0.0, 4.0, 1e-3, n=n)
        cols = traj.arrays()
        worst = max(worst, float(np.max(np.abs(cols["a"] - np.log(cols["t"]) / n))))
    assert worst <= 1e-8, worst

    _, _, c3 = co.eds_solution(3)
    errs = []
    for step in (0.2, 0.1, 0.05, 0.025, 0.0125):
        traj = co.integrate_scale_factor(co.OdeState(1.0, 0.0, 1.0 / 3.0, 0.0), c3, 0.0, 4.0, step, n=3)
        cols = traj.arrays()
        errs.append(float(np.max(np.abs(cols["a"] - np.log(cols["t"]) / 3.0))))
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    assert all(13.0 <= r <= 19.0 for r in ratios), ratios
    _line(8, f"max |a - ln(t)/n| {worst:.3e} at step 1e-3; halving ratios {[round(r, 2) for r in ratios]}")


def test_c09_graded_algebra_properties():
    chart = default_chart(2)
    rng = np.random.default_rng(9)
    zero = ef.constant(chart, 0.0)
    tau = ag.DualFunction.of(chart, 0.0, 1.0)
    tol = 1e-10
    cases = 100

    def homogeneous_field(parity):
        if parity:
            return ag.GradedVectorField((zero, zero), random_polynomial(rng, chart, 2))
        return ag.GradedVectorField(tuple(random_polynomial(rng, chart, 2) for _ in range(2)), zero)

    def homogeneous_dual(parity):
        f = random_polynomial(rng, chart, 2)
        return ag.DualFunction(zero, f) if parity else ag.DualFunction(f, zero)

    def close(a, b, pts):
        for p in pts:
            ea, oa = a(p)
            eb, ob = b(p)
            assert abs(ea - eb) <= tol * (1 + abs(eb)), p
            assert abs(oa - ob) <= tol * (1 + abs(ob)), p

    def pts():
        return [random_interior_point(rng, chart) for _ in range(2)]

    for _ in range(cases):  # graded Leibniz with the parity sign
        pv, pa = int(rng.integers(2)), int(rng.integers(2))
        v, a, b = homogeneous_field(pv), homogeneous_dual(pa), random_dual_function(rng, chart)
        sign = -1.0 if pv and pa else 1.0
        close(ag.derive(v, a * b), ag.derive(v, a) * b + sign * (a * ag.derive(v, b)), pts())

    for _ in range(cases):  # bracket Jacobi
        u, v, w = (random_graded_field(rng, chart, degree=2) for _ in range(3))
        jac = (
            ag.bracket(u, ag.bracket(v, w))
            + ag.bracket(v, ag.bracket(w, u))
            + ag.bracket(w, ag.bracket(u, v))
        )
        for p in pts():
            assert all(abs(c(p)) <= tol for c in jac.even), p
            assert abs(jac.odd(p)) <= tol, p

    for _ in range(cases):  # anchor intertwines the brackets
        v, w = (random_graded_field(rng, chart, degree=2) for _ in range(2))
        lifted = ag.anchor(ag.bracket(v, w))
        for p in pts():
            for k in range(2):
                classical = ag.vector_apply(v.even, w.even[k])(p) - ag.vector_apply(w.even, v.even[k])(p)
                assert abs(lifted[k](p) - classical) <= tol * (1 + abs(classical)), (p, k)

    sq = tau * tau
    assert sq.odd.is_zero and sq.even(chart.midpoint()) == 1.0
    for _ in range(cases):  # tau^2 = 1 inside the product algebra
        a = random_dual_function(rng, chart)
        close((a * tau) * tau, a, pts())

    for _ in range(cases):  # parity bookkeeping for derivations and brackets
        pv, pa = int(rng.integers(2)), int(rng.integers(2))
        v, a = homogeneous_field(pv), homogeneous_dual(pa)
        out = ag.derive(v, a)
        if pv and not pa:
            assert out.is_zero  # xi reads the absent tau part
        elif pv ^ pa:
            assert out.even.is_zero
        else:
            assert out.odd.is_zero
        w = homogeneous_field(int(rng.integers(2)))
        br = ag.bracket(v, w)
        if v.odd.is_zero and w.odd.is_zero:
            assert br.odd.is_zero
        elif not v.odd.is_zero and not w.odd.is_zero:
            assert br.odd.is_zero and all(c.is_zero for c in br.even)
        else:
            assert all(c.is_zero for c in br.even)
    _line(9, f"Leibniz, Jacobi, anchor, tau^2=1, parity: {cases} cases each at {tol:g}")


def test_c10_jet_derivatives_match_finite_differences():
    chart = sample_chart()
    rng = np.random.default_rng(10)
    worst = 0.0
    for cls in FUNCTION_CLASSES:
        for _ in range(100):
            f = sample_expression(rng, chart, cls)
            (p,) = sample_points(rng, chart, 1)
            jet = ef.eval_jet(f, p, 2)
            grad = jet.gradient()
            hess = jet.hessian()
            for a in range(chart.dim):
                fd1 = fd_partial(f, p, a)
                rel = abs(grad[a] - fd1) / (1 + abs(fd1))
                assert rel <= 1e-6, (cls, p, a, rel)
                worst = max(worst, rel)
                for b in range(a, chart.dim):
                    fd2 = fd_second(f, p, a, b)
                    rel = abs(hess[a, b] - fd2) / (1 + abs(fd2))
                    assert rel <= 1e-6, (cls, p, a, b, rel)
                    worst = max(worst, rel)
    assert worst <= 1e-6, worst
    _line(10, f"100 expressions per class ({len(FUNCTION_CLASSES)} classes): max rel err {worst:.3e}")
