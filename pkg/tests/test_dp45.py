import math
from fractions import Fraction as Fr

import numpy as np
import pytest

from resmin import dp45, problems
from resmin.errors import OutOfRange

E3 = 20.085536923187668


def _peval(p, s):
    return sum(c * s ** i for i, c in enumerate(p))


def _pderiv(p):
    return [i * c for i, c in enumerate(p)][1:]


def test_tableau_consistency_exact():
    assert sum(dp45.B_EXACT) == 1
    assert sum(dp45.BHAT_EXACT) == 1
    for row, c in zip(dp45.A_EXACT, dp45.C_EXACT):
        assert sum(row, Fr(0)) == c
    # FSAL: the last stage row equals b
    assert dp45.A_EXACT[6] == dp45.B_EXACT[:6]


def test_dense_polynomials_exact():
    D = dp45.D_EXACT
    for j, p in enumerate(D):
        assert _peval(p, Fr(0)) == 0
        assert _peval(_pderiv(p), Fr(0)) == (1 if j == 0 else 0)
        assert _peval(p, Fr(1)) == dp45.B_EXACT[j]
    assert _peval(D[0], Fr(1)) == Fr(35, 384)
    assert _peval(D[2], Fr(1)) == Fr(500, 1113)
    assert _peval(D[6], Fr(1)) == 0
    # derivative at s = 1 reproduces the FSAL stage
    assert [_peval(_pderiv(p), Fr(1)) for p in D] == [0] * 6 + [1]


def test_dense_weights_float():
    d0, dd0 = dp45.dense_weights(0.0)
    d1, dd1 = dp45.dense_weights(1.0)
    np.testing.assert_array_equal(d0, 0.0)
    np.testing.assert_allclose(dd0, [1, 0, 0, 0, 0, 0, 0], atol=1e-15)
    np.testing.assert_allclose(d1, dp45.DP54.b, atol=1e-15)
    np.testing.assert_allclose(dd1, [0, 0, 0, 0, 0, 0, 1], atol=1e-14)
    d, dd = dp45.dense_weights(np.linspace(0, 1, 5).reshape(5, 1))
    assert d.shape == dd.shape == (5, 1, 7)


def test_dahlquist_terminal_value(dahlquist3_run):
    sys, sol = dahlquist3_run
    assert sol.y_final[0] == pytest.approx(E3, rel=1e-6)
    skel = dp45.skeleton_of(sol)
    assert len(skel) == sol.n_accepted + 1
    np.testing.assert_allclose(skel.values[:, 0], np.exp(3 * skel.times), rtol=1e-6)


def test_sho_terminal_value(sho_run):
    _, sol = sho_run
    assert abs(sol.y_final[0] - 3.5 * math.cos(30.0)) <= 1e-5


def test_empty_interval():
    sol = dp45.integrate(problems.sho(), 1.0, 1.0, [3.5, 0.0])
    assert sol.n_steps == 0
    np.testing.assert_array_equal(sol.y_final, [3.5, 0.0])
    assert len(dp45.skeleton_of(sol)) == 1


def test_single_step_skeleton():
    sol = dp45.integrate(problems.dahlquist(1), 0.0, 0.1, [1.0], fixed_step=0.1)
    assert dp45.skeleton_of(sol).n_stages == 1


def test_dense_endpoints(sho_run):
    sys, sol = sho_run
    i = 5
    y, dy = dp45.dense_eval(sol, sol.t[i])
    np.testing.assert_array_equal(y, sol.y[i])
    np.testing.assert_allclose(dy, sys.f(sol.t[i], sol.y[i]), rtol=1e-15, atol=1e-15)
    yl, dyl = dp45.dense_eval(sol, sol.t[i + 1], side="left")
    np.testing.assert_allclose(yl, sol.y[i + 1], rtol=1e-14)
    with pytest.raises(OutOfRange):
        dp45.dense_eval(sol, 31.0)


def test_junction_c1(sho_run):
    _, sol = sho_run
    tn = sol.t[1:-1]
    yl, dl = dp45.dense_eval(sol, tn, side="left")
    yr, dr = dp45.dense_eval(sol, tn, side="right")
    scale = np.max(np.abs(sol.y))
    assert np.max(np.abs(yl - yr)) <= 1e-12 * scale
    assert np.max(np.abs(dl - dr)) <= 1e-12 * scale


def _slope(h, e):
    return np.polyfit(np.log(h), np.log(e), 1)[0]


def test_fifth_order_skeleton():
    sys = problems.dahlquist(1.0)
    hs = 2.0 ** -np.arange(3, 8)
    errs = [abs(dp45.integrate(sys, 0, 1, [1.0], fixed_step=h).y_final[0] - math.e) for h in hs]
    assert _slope(hs, errs) == pytest.approx(5.0, abs=0.25)


def test_fourth_order_dense_residual():
    sys = problems.dahlquist(1.0)
    hs = 2.0 ** -np.arange(3, 8)
    errs = []
    for h in hs:
        sol = dp45.integrate(sys, 0, 1, [1.0], fixed_step=h)
        t = np.linspace(0, 1, 2001)
        y, dy = dp45.dense_eval(sol, t)
        errs.append(np.max(np.abs(dy - sys.f(t, y))))
    assert _slope(hs, errs) == pytest.approx(4.0, abs=0.3)


def test_controller_counts_and_rejections():
    sol = dp45.integrate(problems.van_der_pol(), 0, 10, [2.0, 0.0], rtol=1e-6, atol=1e-6)
    assert sol.n_accepted == sol.n_steps
    # FSAL: six new evaluations per attempted step plus the start-up ones
    assert sol.n_fev <= 6 * (sol.n_accepted + sol.n_rejected) + 3
