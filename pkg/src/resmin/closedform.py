"""Analytic minimal-residual interpolants for two scalar test problems.

For ``x' = a x`` both the L2 and the stage-Linf problems have explicit
solutions on each stage.  For ``x' = sqrt(x)`` the L2 interpolant is a
quadratic and the stage-Linf residual is a constant found from a scalar
implicit equation.  Everything here works on one stage at a time; the
``*_curve`` helpers stitch stages together for a whole skeleton.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BracketFailure, DomainError, DomainWarning, OutOfBranch, ZeroParameter
from .residual import StagewiseCurve
from .skeleton import Skeleton, Stage

_GAUSS32 = np.polynomial.legendre.leggauss(32)


def _scalar(z):
    return float(np.asarray(z, dtype=float).reshape(-1)[0])


def _bounds(stage):
    """Accept a Stage or a ``(t_start, t_end)`` pair."""
    if isinstance(stage, Stage):
        return stage.t_start, stage.t_end
    t0, t1 = map(float, stage)
    if not t1 > t0:
        raise ValueError("stage must have positive duration")
    return t0, t1


# -- Lambert W ------------------------------------------------------------------

_INV_E = math.exp(-1.0)


def _halley(x, w, maxiter=64):
    for _ in range(maxiter):
        ew = math.exp(w)
        fval = w * ew - x
        if fval == 0.0:
            return w
        wp1 = w + 1.0
        if wp1 == 0.0:
            return w
        dw = fval / (ew * wp1 - (w + 2.0) * fval / (2.0 * wp1))
        w -= dw
        if abs(dw) <= 1e-16 * (1.0 + abs(w)):
            break
    return w


def lambert_w0(x: float) -> float:
    """Principal branch ``W_0`` of the Lambert W function (``w >= -1``).

    Halley iteration from a branch-point series near ``-1/e``, a log-based
    guess for large arguments and ``log1p`` elsewhere.
    """
    x = float(x)
    if x < -_INV_E:
        # tolerate the rounding of -1/e itself
        if x < -_INV_E * (1 + 4e-16):
            raise OutOfBranch(f"W0 is real only for x >= -1/e, got {x!r}")
        return -1.0
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return math.inf
    if x < -0.25:
        p = math.sqrt(max(0.0, 2.0 * (math.e * x + 1.0)))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    elif x > 3.0:
        lx = math.log(x)
        w = lx - math.log(lx)
    else:
        w = math.log1p(x) * 0.8 if x > 0 else x
    return _halley(x, w)


def lambert_wm1(x: float) -> float:
    """Lower real branch ``W_{-1}`` on ``[-1/e, 0)`` (``w <= -1``)."""
    x = float(x)
    if not -_INV_E * (1 + 4e-16) <= x < 0.0:
        raise OutOfBranch(f"W_-1 is real only for -1/e <= x < 0, got {x!r}")
    if x <= -_INV_E:
        return -1.0
    if x < -0.25:
        p = -math.sqrt(max(0.0, 2.0 * (math.e * x + 1.0)))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    else:
        l1 = math.log(-x)
        w = l1 - math.log(-l1)
    return _halley(x, w)


# -- Dahlquist ------------------------------------------------------------------

@dataclass(frozen=True)
class DahlquistStageL2:
    """L2-minimal interpolant of ``x' = a x`` on one stage.

    The optimal residual is ``u(t) = r exp(a (t_end - t))``.
    """

    a: float
    t_start: float
    t_end: float
    z_start: float
    z_end: float
    r: float
    # x(t) = p exp(a s) + q exp(-a s), s = t - t_start
    p: float
    q: float

    @property
    def duration(self):
        return self.t_end - self.t_start

    def u(self, t):
        return self.r * np.exp(self.a * (self.t_end - np.asarray(t, dtype=float)))

    def x(self, t):
        s = np.asarray(t, dtype=float) - self.t_start
        return self.p * np.exp(self.a * s) + self.q * np.exp(-self.a * s)

    def xdot(self, t):
        s = np.asarray(t, dtype=float) - self.t_start
        return self.a * (self.p * np.exp(self.a * s) - self.q * np.exp(-self.a * s))

    @property
    def adjoint_coefficient(self):
        """``lambda(t) = -u(t)``; this is its value at ``t_end``."""
        return -self.r

    @property
    def l2_squared(self) -> float:
        """Integral of ``u**2`` over the stage."""
        a, tau = self.a, self.duration
        return self.r ** 2 * math.expm1(2 * a * tau) / (2 * a)

    @property
    def objective(self) -> float:
        return 0.5 * self.l2_squared

    @property
    def max_abs_u(self) -> float:
        return float(max(abs(self.u(self.t_start)), abs(self.u(self.t_end))))


def dahlquist_l2(a, stage, z_start=None, z_end=None) -> DahlquistStageL2:
    a = float(a)
    if a == 0.0:
        raise ZeroParameter("a must be nonzero")
    t0, t1 = _bounds(stage)
    if isinstance(stage, Stage):
        z_start = stage.z_start if z_start is None else z_start
        z_end = stage.z_end if z_end is None else z_end
    z0, z1 = _scalar(z_start), _scalar(z_end)
    tau = t1 - t0
    E = math.exp(a * tau)
    # 1 - E**2 computed without cancellation
    one_minus_E2 = -math.expm1(2 * a * tau)
    r = -2 * a * (z1 - E * z0) / one_minus_E2
    q = E * (z1 - E * z0) / one_minus_E2
    return DahlquistStageL2(a, t0, t1, z0, z1, r, z0 - q, q)


@dataclass(frozen=True)
class DahlquistStageLinf:
    """Stage-Linf-minimal interpolant of ``x' = a x``: constant residual."""

    a: float
    t_start: float
    t_end: float
    z_start: float
    z_end: float
    ubar: float

    @property
    def alpha(self) -> float:
        return abs(self.ubar)

    objective = max_abs_u = alpha

    def u(self, t):
        return np.full(np.shape(t), self.ubar)

    def x(self, t):
        a, s = self.a, np.asarray(t, dtype=float) - self.t_start
        # (z0 + ubar/a) e^{as} - ubar/a, written to stay accurate for small a s
        return self.z_start * np.exp(a * s) + self.ubar * np.expm1(a * s) / a

    def xdot(self, t):
        return self.a * self.x(t) + self.ubar


def dahlquist_linf(a, stage, z_start=None, z_end=None) -> DahlquistStageLinf:
    a = float(a)
    if a == 0.0:
        raise ZeroParameter("a must be nonzero")
    t0, t1 = _bounds(stage)
    if isinstance(stage, Stage):
        z_start = stage.z_start if z_start is None else z_start
        z_end = stage.z_end if z_end is None else z_end
    z0, z1 = _scalar(z_start), _scalar(z_end)
    tau = t1 - t0
    # endpoint-consistent: x(t_end) = z_end for the constant-residual solution
    ubar = a * (z1 - math.exp(a * tau) * z0) / math.expm1(a * tau)
    return DahlquistStageLinf(a, t0, t1, z0, z1, ubar)


def norm_ratio(a: float, tau: float) -> float:
    """``max|u_L2| / alpha`` on a stage of duration ``tau``."""
    E = math.exp(-abs(a) * tau)
    # both sign cases reduce to 2 / (1 + exp(-|a| tau))
    return 2.0 / (1.0 + E)


def compare_norms(a, stage, z_start=None, z_end=None):
    """Return ``(alpha, l2_max, ratio)`` for one Dahlquist stage.

    ``l2_max`` is taken from the L2 solution directly; ``ratio`` is the
    closed-form factor, so ``l2_max == ratio * alpha`` up to rounding.
    """
    lin = dahlquist_linf(a, stage, z_start, z_end)
    l2 = dahlquist_l2(a, stage, z_start, z_end)
    ratio = norm_ratio(lin.a, l2.duration)
    l2_max = l2.max_abs_u
    if lin.alpha > 0 and not lin.alpha < l2_max:
        raise AssertionError(f"alpha={lin.alpha!r} is not below max|u_L2|={l2_max!r}")
    return lin.alpha, l2_max, ratio


# -- sqrt flow ------------------------------------------------------------------

def _positive_endpoints(z0, z1):
    if not (z0 > 0 and z1 > 0):
        raise DomainError(f"sqrt flow endpoints must be positive, got {z0!r}, {z1!r}")


@dataclass(frozen=True)
class SqrtStageL2:
    """L2-minimal interpolant of ``x' = sqrt(x)``: ``x = t**2/4 + c1 t + c2``."""

    t_start: float
    t_end: float
    z_start: float
    z_end: float
    c1: float
    c2: float

    def x(self, t):
        t = np.asarray(t, dtype=float)
        return t * t / 4 + self.c1 * t + self.c2

    def xdot(self, t):
        return np.asarray(t, dtype=float) / 2 + self.c1

    def u(self, t):
        x = self.x(t)
        if np.any(x <= 0):
            raise DomainError("quadratic interpolant leaves x > 0 on this stage")
        return self.xdot(t) - np.sqrt(x)

    def _fine(self, m=4001):
        return np.linspace(self.t_start, self.t_end, m)

    @property
    def objective(self) -> float:
        """Half the integral of ``u**2``.

        Composite Gauss-Legendre, 16 panels of 32 nodes: ``u`` is analytic
        wherever ``x > 0``, and a fixed rule stays quiet when ``u`` is pure
        rounding noise on an exact skeleton.
        """
        s, w = _GAUSS32
        edges = np.linspace(self.t_start, self.t_end, 17)
        half = 0.5 * np.diff(edges)
        t = (0.5 * (edges[:-1] + edges[1:]))[:, None] + half[:, None] * s
        return 0.5 * float(np.sum(half[:, None] * w * self.u(t) ** 2))

    @property
    def max_abs_u(self) -> float:
        return float(np.max(np.abs(self.u(self._fine()))))


def sqrt_l2(stage, z_start=None, z_end=None) -> SqrtStageL2:
    t0, t1 = _bounds(stage)
    if isinstance(stage, Stage):
        z_start = stage.z_start if z_start is None else z_start
        z_end = stage.z_end if z_end is None else z_end
    z0, z1 = _scalar(z_start), _scalar(z_end)
    _positive_endpoints(z0, z1)
    c1 = (z1 - z0 - (t1 * t1 - t0 * t0) / 4) / (t1 - t0)
    c2 = z0 - t0 * t0 / 4 - t0 * c1
    sol = SqrtStageL2(t0, t1, z0, z1, c1, c2)
    # vertex of the parabola is the only place x can dip below zero
    tv = min(max(-2 * c1, t0), t1)
    if sol.x(tv) <= 0:
        warnings.warn("L2 interpolant of the sqrt flow is not positive on the stage",
                      DomainWarning, stacklevel=2)
    return sol


def _sqrt_g(u, a, b, D):
    """Implicit stage equation ``u ln((b+u)/(a+u)) - D`` and its derivative."""
    A, B = a + u, b + u
    lr = math.log(B / A)
    return u * lr - D, lr + u * (1.0 / B - 1.0 / A)


@dataclass(frozen=True)
class SqrtStageLinf:
    """Stage-Linf-minimal interpolant of ``x' = sqrt(x)``.

    The residual is the constant ``ubar``; the state solves
    ``sqrt(x) - ubar ln((sqrt(x)+ubar)/(sqrt(z0)+ubar)) = sqrt(z0) + (t-t0)/2``.
    """

    t_start: float
    t_end: float
    z_start: float
    z_end: float
    ubar: float
    iterations: int = 0

    @property
    def alpha(self) -> float:
        return abs(self.ubar)

    objective = max_abs_u = alpha

    def u(self, t):
        return np.full(np.shape(t), self.ubar)

    def x(self, t):
        """State by safeguarded Newton on ``y = sqrt(x)`` pointwise."""
        t = np.asarray(t, dtype=float)
        ub, a, b = self.ubar, math.sqrt(self.z_start), math.sqrt(self.z_end)
        rhs = a + (t - self.t_start) / 2
        lo = np.full(t.shape, min(a, b))
        hi = np.full(t.shape, max(a, b))
        if self.z_start == self.z_end:
            return np.full(t.shape, self.z_start)
        y = np.clip(a + (b - a) * (t - self.t_start) / (self.t_end - self.t_start), lo, hi)
        A = a + ub
        for _ in range(100):
            h = y - ub * np.log((y + ub) / A) - rhs
            dh = y / (y + ub)
            # h is monotone in y; keep a bracket for bisection fallback
            incr = np.sign(dh) > 0
            pos = (h > 0) == incr
            hi = np.where(pos, y, hi)
            lo = np.where(pos, lo, y)
            step = y - h / dh
            bad = ~((step > lo) & (step < hi)) | ~np.isfinite(step)
            y_new = np.where(bad, 0.5 * (lo + hi), step)
            if np.all(np.abs(y_new - y) <= 4e-16 * np.abs(y)):
                y = y_new
                break
            y = y_new
        return y * y

    def xdot(self, t):
        return np.sqrt(self.x(t)) + self.ubar

    def x_lambertw(self, t):
        """Explicit form through Lambert W; ``None`` where it over/underflows.

        With ``C(t) = sqrt(z0) - ubar ln(sqrt(z0)+ubar) + (t-t0)/2`` the state
        is ``(ubar (W(arg) + 1))**2`` where
        ``arg = -(1/ubar) exp(-1 - C/ubar)``; ``W_0`` applies for
        ``ubar < 0`` and ``W_{-1}`` for ``ubar > 0``.
        """
        ub = self.ubar
        if ub == 0.0:
            return (math.sqrt(self.z_start) + (np.asarray(t, dtype=float) - self.t_start) / 2) ** 2
        a = math.sqrt(self.z_start)
        if a + ub <= 0:
            return None
        out = []
        for ti in np.atleast_1d(np.asarray(t, dtype=float)):
            C = a - ub * math.log(a + ub) + (ti - self.t_start) / 2
            expo = -1.0 - C / ub
            if expo > 700 or expo < -745:
                return None
            arg = -math.exp(expo) / ub
            try:
                w = lambert_w0(arg) if ub < 0 else lambert_wm1(arg)
            except OutOfBranch:
                return None
            out.append((ub * (w + 1.0)) ** 2)
        res = np.array(out)
        return res.reshape(np.shape(t))


def sqrt_linf(stage, z_start=None, z_end=None, maxiter: int = 200) -> SqrtStageLinf:
    """Solve the implicit constant-residual equation for one stage.

    The root is bracketed first (expanding geometrically from a mean-slope
    guess) and then refined with Newton steps that fall back to bisection
    whenever they leave the bracket.
    """
    t0, t1 = _bounds(stage)
    if isinstance(stage, Stage):
        z_start = stage.z_start if z_start is None else z_start
        z_end = stage.z_end if z_end is None else z_end
    z0, z1 = _scalar(z_start), _scalar(z_end)
    _positive_endpoints(z0, z1)
    a, b, tau = math.sqrt(z0), math.sqrt(z1), t1 - t0
    D = b - a - tau / 2
    if z0 == z1:
        # the state must stay put, so the residual cancels f exactly
        return SqrtStageLinf(t0, t1, z0, z1, -a, 0)
    if D == 0.0:
        return SqrtStageLinf(t0, t1, z0, z1, 0.0, 0)

    if z1 > z0:
        # sqrt(x) + u > 0 along the whole stage
        wall, side = -a, 1.0
    else:
        wall, side = -a, -1.0  # u < -sqrt(z0): x decreases monotonically

    def g(u):
        if side * (u - wall) <= 0:
            raise DomainError(f"sqrt(z) + u changes sign at u={u!r}")
        return _sqrt_g(u, a, b, D)

    # g -> -inf at the wall and -> tau/2 > 0 far away from it
    guess = (z1 - z0) / tau - (a + b) / 2
    if side * (guess - wall) <= 0:
        guess = wall + side * 0.5 * a
    lo = hi = guess
    glo = ghi = g(guess)[0]
    step = max(abs(guess - wall), 1e-3 * a)
    for _ in range(200):
        if ghi > 0:
            break
        hi = hi + side * step
        step *= 2
        ghi = g(hi)[0]
    else:
        raise BracketFailure("could not find u with g(u) > 0")
    for k in range(1, 1100):
        if glo < 0:
            break
        lo = wall + (lo - wall) * 0.5
        glo = g(lo)[0]
    else:
        raise BracketFailure("could not find u with g(u) < 0")

    u = 0.5 * (lo + hi)
    for it in range(1, maxiter + 1):
        gu, dg = g(u)
        if gu == 0:
            break
        if gu < 0:
            lo = u
        else:
            hi = u
        nxt = u - gu / dg if dg != 0 else None
        if nxt is None or not (min(lo, hi) < nxt < max(lo, hi)):
            nxt = 0.5 * (lo + hi)
        if abs(nxt - u) <= 2e-16 * max(abs(u), a):
            u = nxt
            break
        u = nxt
    else:
        raise BracketFailure("safeguarded Newton did not converge")
    return SqrtStageLinf(t0, t1, z0, z1, u, it)


# -- whole-skeleton curves --------------------------------------------------------

def _curve_from(stages, times):
    pieces = [lambda t, s=s: (s.x(t)[..., None], s.xdot(t)[..., None]) for s in stages]
    return StagewiseCurve.build(times, pieces, continuity="C0")


def stage_solutions(problem, skel: Skeleton, norm: str):
    """Closed-form stage objects for a ``dahlquist`` or ``sqrt`` problem."""
    if norm not in ("l2", "stage_linf"):
        raise ValueError(f"unknown norm {norm!r}")
    if problem.name == "dahlquist":
        a = problem.params["a"]
        make = dahlquist_l2 if norm == "l2" else dahlquist_linf
        return [make(a, st) for st in skel.stages()]
    if problem.name == "sqrt":
        make = sqrt_l2 if norm == "l2" else sqrt_linf
        return [make(st) for st in skel.stages()]
    raise ValueError(f"no closed form for problem {problem.name!r}")


def has_closed_form(problem) -> bool:
    return problem.name in ("dahlquist", "sqrt")


def interpolant(problem, skel: Skeleton, norm: str) -> StagewiseCurve:
    """Minimal-residual interpolant of a whole skeleton as a curve."""
    return _curve_from(stage_solutions(problem, skel, norm), skel.times)
