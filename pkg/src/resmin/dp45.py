"""Dormand-Prince RK5(4) integrator with FSAL and its free dense output.

The solution is advanced with the fifth-order weights (local extrapolation);
the embedded fourth-order weights only drive step-size control.  Every
accepted step keeps its seven stage derivatives so that the continuous
extension

    z(t_n + s h) = y_n + h * sum_j d_j(s) k_j

can be evaluated later, together with its time derivative.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction as Fr

import numpy as np

from .errors import MaxStepsExceeded, OutOfRange, StepsizeUnderflow
from .skeleton import Skeleton


# -- tableau (exact rationals) --------------------------------------------------

A_EXACT = [
    [],
    [Fr(1, 5)],
    [Fr(3, 40), Fr(9, 40)],
    [Fr(44, 45), Fr(-56, 15), Fr(32, 9)],
    [Fr(19372, 6561), Fr(-25360, 2187), Fr(64448, 6561), Fr(-212, 729)],
    [Fr(9017, 3168), Fr(-355, 33), Fr(46732, 5247), Fr(49, 176), Fr(-5103, 18656)],
    [Fr(35, 384), Fr(0), Fr(500, 1113), Fr(125, 192), Fr(-2187, 6784), Fr(11, 84)],
]
B_EXACT = [Fr(35, 384), Fr(0), Fr(500, 1113), Fr(125, 192), Fr(-2187, 6784), Fr(11, 84), Fr(0)]
# embedded fourth-order row, used only for the error estimate
BHAT_EXACT = [Fr(5179, 57600), Fr(0), Fr(7571, 16695), Fr(393, 640),
              Fr(-92097, 339200), Fr(187, 2100), Fr(1, 40)]
C_EXACT = [Fr(0), Fr(1, 5), Fr(3, 10), Fr(4, 5), Fr(8, 9), Fr(1), Fr(1)]


def _pmul(*polys):
    """Multiply polynomials given as ascending coefficient lists."""
    out = [Fr(1)]
    for p in polys:
        res = [Fr(0)] * (len(out) + len(p) - 1)
        for i, a in enumerate(out):
            for j, b in enumerate(p):
                res[i + j] += a * b
        out = res
    return out


def _pad(p, n=5):
    return list(p) + [Fr(0)] * (n - len(p))


# d_j(s) in the factored form they are usually printed in; coefficients ascend in s
S = [Fr(0), Fr(1)]
S2 = [Fr(0), Fr(0), Fr(1)]
D_EXACT = [
    _pmul([Fr(-1, 384)], S, [Fr(-384), Fr(1098), Fr(-1184), Fr(435)]),
    [Fr(0)],
    _pmul([Fr(500, 1113)], S2, [Fr(9), Fr(-14), Fr(6)]),
    _pmul([Fr(-125, 192)], S2, [Fr(6), Fr(-16), Fr(9)]),
    _pmul([Fr(729, 6784)], S2, [Fr(26), Fr(-64), Fr(35)]),
    _pmul([Fr(-11, 84)], S2, [Fr(-2), Fr(3)], [Fr(-6), Fr(5)]),
    _pmul([Fr(1, 2)], S2, [Fr(-3), Fr(5)], [Fr(-1), Fr(1)]),
]
D_EXACT = [_pad(p) for p in D_EXACT]


@dataclass(frozen=True)
class ButcherTableau:
    A: np.ndarray
    b: np.ndarray
    bhat: np.ndarray
    c: np.ndarray
    # dense-output polynomial coefficients, shape (stages, degree + 1)
    dense: np.ndarray

    @property
    def stages(self) -> int:
        return self.b.shape[0]


def _tableau():
    A = np.zeros((7, 7))
    for i, row in enumerate(A_EXACT):
        A[i, :len(row)] = [float(v) for v in row]
    return ButcherTableau(
        A=A,
        b=np.array([float(v) for v in B_EXACT]),
        bhat=np.array([float(v) for v in BHAT_EXACT]),
        c=np.array([float(v) for v in C_EXACT]),
        dense=np.array([[float(v) for v in p] for p in D_EXACT]),
    )


DP54 = _tableau()
_E = DP54.b - DP54.bhat
_DDENSE = DP54.dense[:, 1:] * np.arange(1, DP54.dense.shape[1])


def dense_weights(s):
    """Return ``d_j(s)`` and ``d_j'(s)`` for scalar or array ``s``.

    Output shapes are ``s.shape + (7,)``.
    """
    s = np.asarray(s, dtype=float)
    deg = DP54.dense.shape[1] - 1
    powers = s[..., None] ** np.arange(deg + 1)
    d = powers @ DP54.dense.T
    dd = powers[..., :deg] @ _DDENSE.T
    return d, dd


# -- solution containers --------------------------------------------------------

@dataclass(frozen=True)
class StepRecord:
    t_n: float
    h: float
    y_n: np.ndarray
    k: np.ndarray  # (7, n)


class DenseSolution:
    """Accepted steps of a Dormand-Prince run, evaluable anywhere in between.

    Attributes
    ----------
    t : ndarray, shape (N+1,)
        Step endpoints (the skeleton times).
    y : ndarray, shape (N+1, n)
        Solution at the step endpoints.
    h : ndarray, shape (N,)
    k : ndarray, shape (N, 7, n)
        Stage derivatives of every accepted step.
    """

    def __init__(self, t, y, k, n_accepted, n_rejected, n_fev):
        self.t = np.asarray(t, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.k = np.asarray(k, dtype=float).reshape(len(self.t) - 1, 7, self.y.shape[1])
        self.h = np.diff(self.t)
        self.n_accepted = n_accepted
        self.n_rejected = n_rejected
        self.n_fev = n_fev
        for a in (self.t, self.y, self.k, self.h):
            a.setflags(write=False)

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def tf(self) -> float:
        return float(self.t[-1])

    @property
    def y_final(self) -> np.ndarray:
        return self.y[-1]

    @property
    def n_steps(self) -> int:
        return len(self.h)

    @property
    def records(self) -> list[StepRecord]:
        return [StepRecord(float(self.t[i]), float(self.h[i]), self.y[i], self.k[i])
                for i in range(self.n_steps)]

    def locate(self, t, side: str = "right") -> np.ndarray:
        """Index of the step used for ``t``.

        ``side="right"`` uses the step starting at a shared node, ``"left"``
        the one ending there; the final time always maps to the last step.
        """
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.t, t, side=side) - 1
        return np.clip(idx, 0, self.n_steps - 1)

    def __call__(self, t, side: str = "right"):
        return dense_eval(self, t, side=side)


def dense_eval(sol: DenseSolution, t, side: str = "right"):
    """Evaluate the continuous extension and its derivative at ``t``.

    Returns ``(y, ydot)`` with shapes ``t.shape + (n,)``.
    """
    t = np.asarray(t, dtype=float)
    if sol.n_steps == 0:
        if np.any(t != sol.t0):
            raise OutOfRange(f"solution is a single point at t={sol.t0}")
        f0 = np.full(t.shape + sol.y.shape[1:], np.nan)
        return np.broadcast_to(sol.y[0], f0.shape).copy(), f0
    span = sol.tf - sol.t0
    slack = 4 * np.finfo(float).eps * max(abs(sol.t0), abs(sol.tf), span)
    if np.any(t < sol.t0 - slack) or np.any(t > sol.tf + slack):
        raise OutOfRange(f"t outside [{sol.t0}, {sol.tf}]")
    i = sol.locate(t, side=side)
    h = sol.h[i]
    s = (t - sol.t[i]) / h
    d, dd = dense_weights(s)
    K = sol.k[i]                                   # (..., 7, n)
    y = sol.y[i] + h[..., None] * np.einsum("...j,...jn->...n", d, K)
    ydot = np.einsum("...j,...jn->...n", dd, K)
    return y, ydot


def skeleton_of(sol: DenseSolution) -> Skeleton:
    return Skeleton(sol.t, sol.y)


# -- integrator -----------------------------------------------------------------

def _rms(v):
    return float(np.sqrt(np.mean(v * v)))


def _initial_step(f, t0, y0, f0, rtol, atol, direction_span):
    sc = atol + rtol * np.abs(y0)
    d0, d1 = _rms(y0 / sc), _rms(f0 / sc)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_span)
    f1 = np.asarray(f(t0 + h0, y0 + h0 * f0), dtype=float)
    d2 = _rms((f1 - f0) / sc) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 5.0)
    return min(100 * h0, h1)


def integrate(sys, t0: float, tf: float, y0, rtol: float = 1e-6, atol: float = 1e-6,
              first_step: float | None = None, fixed_step: float | None = None,
              max_steps: int = 1_000_000) -> DenseSolution:
    """Integrate ``x' = f(t, x)`` from ``t0`` to ``tf`` with DP5(4).

    Parameters
    ----------
    sys : OdeSystem or callable
        Anything with ``f(t, y)`` semantics (an :class:`OdeSystem` works).
    rtol, atol : float
        Componentwise tolerances; the error norm is the RMS of
        ``err / (atol + rtol * max(|y_n|, |y_{n+1}|))``.
    fixed_step : float, optional
        Take equal steps of (about) this size with no error control, for
        order studies.  The step is adjusted so that it divides ``tf - t0``.
    max_steps : int
        Cap on attempted steps.
    """
    f = sys.f if hasattr(sys, "f") else sys
    t0, tf = float(t0), float(tf)
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    if tf < t0:
        raise ValueError("only forward integration (tf >= t0) is supported")
    if not (rtol > 0 and atol > 0):
        raise ValueError("rtol and atol must be positive")
    n = y0.shape[0]
    if tf == t0:
        return DenseSolution([t0], [y0], np.zeros((0, 7, n)), 0, 0, 0)

    A, b, c = DP54.A, DP54.b, DP54.c
    span = tf - t0
    k1 = np.asarray(f(t0, y0), dtype=float)
    nfev = 1

    if fixed_step is not None:
        nsteps = max(1, int(round(span / fixed_step)))
        grid = t0 + span * np.arange(nsteps + 1) / nsteps
        grid[-1] = tf
    else:
        grid = None
        h = first_step if first_step is not None else _initial_step(f, t0, y0, k1, rtol, atol, span)
        h = min(h, span / 10)
        nfev += 1

    ts, ys, ks = [t0], [y0], []
    t, y = t0, y0
    accepted = rejected = 0
    K = np.empty((7, n))
    eps = np.finfo(float).eps

    while t < tf:
        if accepted + rejected >= max_steps:
            raise MaxStepsExceeded(f"more than {max_steps} steps attempted (t={t})")
        if grid is not None:
            t_new = grid[accepted + 1]
            h = t_new - t
        else:
            if h < 16 * eps * max(abs(t), 1e-300):
                raise StepsizeUnderflow(f"step size {h:.3g} too small at t={t}")
            if t + h >= tf or t + 1.1 * h >= tf:
                # land exactly on tf, stretching the last step a little if needed
                h = tf - t
                t_new = tf
            else:
                t_new = t + h

        K[0] = k1
        for j in range(1, 6):
            K[j] = f(t + c[j] * h, y + h * (A[j, :j] @ K[:j]))
        y_new = y + h * (b[:6] @ K[:6])
        K[6] = f(t_new, y_new)
        nfev += 6

        if grid is not None:
            err = 0.0
        else:
            sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = _rms(h * (_E @ K) / sc)
            if not np.isfinite(err):
                err = np.inf

        if err <= 1.0:
            ts.append(t_new)
            ys.append(y_new.copy())
            ks.append(K.copy())
            t, y = t_new, y_new
            k1 = K[6].copy()  # FSAL
            accepted += 1
            if grid is None:
                fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                h *= fac
        else:
            rejected += 1
            fac = 0.2 if not np.isfinite(err) else min(1.0, max(0.2, 0.9 * err ** -0.2))
            h *= fac

    return DenseSolution(ts, ys, np.array(ks), accepted, rejected, nfev)
