import math

import numpy as np
import pytest

from resmin import closedform, dp45, minres, problems, residual
from resmin.residual import CurveEval
from resmin.skeleton import Skeleton, refine_mesh


def _curve(fn, dfn, t0, t1):
    return CurveEval(lambda t: (fn(t)[..., None], dfn(t)[..., None]), t0, t1)


def test_exact_solution_has_zero_residual():
    sys = problems.dahlquist(1.0)
    c = _curve(np.exp, np.exp, 0, 1)
    r = residual.residual_at(sys, c, np.linspace(0, 1, 50))
    assert np.max(np.abs(r)) <= 1e-12


def test_linear_curve_on_zero_rhs():
    zero = problems.OdeSystem("zero", 1, lambda t, x: 0 * np.asarray(x), lambda t, x: 0 * x[..., None])
    c = _curve(lambda t: t, np.ones_like, 0, 1)
    np.testing.assert_array_equal(residual.residual_at(zero, c, np.linspace(0, 1, 7))[:, 0], 1.0)


def test_dense_residual_sho_bound(sho_run):
    sys, sol = sho_run
    t = refine_mesh(sol.t, 8)
    y, dy = dp45.dense_eval(sol, t)
    assert np.max(np.abs(dy - sys.f(t, y))) <= 1e-5


def test_report_zero_and_closed_form():
    sys = problems.dahlquist(1.0)
    skel = Skeleton([0.0, 0.5, 1.0], np.exp([0.0, 0.5, 1.0]))
    rep = residual.report(sys, _curve(np.exp, np.exp, 0, 1), skel)
    assert rep.global_max <= 1e-12 and np.all(rep.stage_l2 <= 1e-12)

    skel = Skeleton([0.0, 1.0], [1.0, 3.0])
    curve = closedform.interpolant(sys, skel, "l2")
    rep = residual.report(sys, curve, skel)
    assert rep.stage_sup[0] == pytest.approx(0.23972, abs=5e-6)
    assert rep.global_max == np.max(rep.stage_sup)


def test_refine_one_warns():
    sys = problems.dahlquist(1.0)
    skel = Skeleton([0.0, 1.0], [1.0, 3.0])
    with pytest.warns(UserWarning, match="refine=1"):
        residual.report(sys, closedform.interpolant(sys, skel, "l2"), skel, refine=1)


def test_constant_residual_quadrature():
    c, tau = 0.37, 0.8
    zero = problems.OdeSystem("zero", 1, lambda t, x: 0 * np.asarray(x), lambda t, x: 0 * x[..., None])
    curve = _curve(lambda t: c * t, lambda t: np.full_like(t, c), 0, tau)
    rep = residual.report(zero, curve, Skeleton([0.0, tau], [0.0, c * tau]))
    assert rep.stage_l2[0] == pytest.approx(abs(c) * math.sqrt(tau), rel=1e-10)
    assert rep.stage_l2_squared[0] == pytest.approx(c * c * tau, rel=1e-10)


def test_hermite_curve_interpolates(vdp_run):
    sys, sol = vdp_run
    skel = dp45.skeleton_of(sol)
    curve = residual.hermite_curve(sys, skel)
    y, dy = curve(skel.times[:-1])
    np.testing.assert_allclose(y, skel.values[:-1], rtol=1e-14, atol=1e-14)
    np.testing.assert_allclose(dy, sys.f(skel.times[:-1], skel.values[:-1]), rtol=1e-12, atol=1e-12)


def test_report_dominates_minimal_stage_linf(dahlquist3_run):
    sys, sol = dahlquist3_run
    skel = dp45.skeleton_of(sol)
    rep = residual.report(sys, residual.dense_curve(sol), skel)
    # default resolution: coarser grids overshoot the tiny minimal residuals
    # of a tight skeleton by their own truncation error
    cfg = minres.TranscriptionConfig()
    for i in (1, 10, 20):
        s = minres.minimize_linf_stage(sys, skel.stage(i), cfg)
        assert rep.stage_sup[i - 1] >= s.alpha * (1 - 1e-3)


def test_work_precision_dahlquist():
    wp = residual.work_precision(problems.dahlquist(1.0), 0.0, 1.0, [1.0], nsamp=40)
    assert wp.slope == pytest.approx(4.0, abs=0.5)
    assert not wp.low_confidence
    # monotone over the 10 smallest step sizes, up to one inversion
    order = np.argsort(wp.mean_h)[:10]
    e = wp.max_residual[order][::-1]
    assert np.count_nonzero(np.diff(e) > 0) <= 1


def test_work_precision_minimum_samples(tmp_path):
    wp = residual.work_precision(problems.sho(), 0.0, 30.0, [3.5, 0.0], nsamp=4)
    assert len(wp.rows()) == 4 and wp.fit_k.size == 2 and wp.low_confidence
    wp.write_csv(tmp_path / "wp.csv")
    lines = (tmp_path / "wp.csv").read_text().splitlines()
    assert lines[0] == "k,rtol,mean_h,max_residual" and len(lines) == 5
    k2 = 4 // 2 - 1
    assert wp.const4 == pytest.approx(wp.max_residual[k2] / wp.mean_h[k2] ** 4)


def test_work_precision_rejects_tiny_nsamp():
    with pytest.raises(ValueError):
        residual.work_precision(problems.sho(), 0.0, 1.0, [1.0, 0.0], nsamp=3)
