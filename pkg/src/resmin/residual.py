"""Residuals of continuous extensions and the work-precision experiment.

The residual of a differentiable curve ``z`` is ``r(t) = z'(t) - f(t, z(t))``.
Curves are sampled stage by stage so that piecewise interpolants with jumps
in their derivative at the nodes are measured from the correct side.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid

from . import dp45
from .skeleton import Skeleton, refine_mesh


@dataclass(frozen=True)
class CurveEval:
    """A curve ``t -> (y, ydot)`` on ``[t0, t1]``.

    ``fn`` must accept an array of times and return arrays of shape
    ``t.shape + (n,)``.  ``continuity`` is one of ``"C0"``, ``"C1"`` or
    ``"unknown"``.
    """

    fn: Callable
    t0: float
    t1: float
    continuity: str = "unknown"

    def __call__(self, t):
        return self.fn(np.asarray(t, dtype=float))

    def on_stage(self, i: int, t):
        return self(t)


@dataclass(frozen=True)
class StagewiseCurve(CurveEval):
    """Curve assembled from one evaluator per stage.

    ``pieces[i - 1]`` evaluates stage ``i``; at a shared node the right-hand
    stage is used when no stage is specified.
    """

    times: np.ndarray = field(default=None)
    pieces: Sequence[Callable] = ()

    @classmethod
    def build(cls, times, pieces, continuity="C0"):
        times = np.asarray(times, dtype=float)
        if len(pieces) != len(times) - 1:
            raise ValueError("need one piece per stage")
        obj = cls(fn=None, t0=float(times[0]), t1=float(times[-1]),
                  continuity=continuity, times=times, pieces=tuple(pieces))
        object.__setattr__(obj, "fn", obj._eval)
        return obj

    def _eval(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.pieces) - 1)
        flat_t, flat_i = t.ravel(), idx.ravel()
        y = ydot = None
        for i in np.unique(flat_i):
            sel = flat_i == i
            yi, di = self.pieces[i](flat_t[sel])
            if y is None:
                y = np.empty((flat_t.size,) + yi.shape[1:])
                ydot = np.empty_like(y)
            y[sel], ydot[sel] = yi, di
        return y.reshape(t.shape + y.shape[1:]), ydot.reshape(t.shape + y.shape[1:])

    def on_stage(self, i: int, t):
        return self.pieces[i - 1](np.asarray(t, dtype=float))


def dense_curve(sol: dp45.DenseSolution) -> StagewiseCurve:
    """Dormand-Prince continuous extension as a curve (C1 by construction)."""

    pieces = [lambda t, i=i: _dense_step(sol, i, t) for i in range(sol.n_steps)]
    return StagewiseCurve.build(sol.t, pieces, continuity="C1")


def _dense_step(sol, i, t):
    h = sol.h[i]
    s = (np.asarray(t, dtype=float) - sol.t[i]) / h
    d, dd = dp45.dense_weights(s)
    y = sol.y[i] + h * (d @ sol.k[i])
    return y, dd @ sol.k[i]


def hermite_curve(sys, skel: Skeleton) -> StagewiseCurve:
    """Piecewise cubic Hermite interpolant using ``f`` at the nodes.

    A solver-independent C1 extension for skeletons that arrive without
    stage data.
    """
    t, z = skel.times, skel.values
    fz = np.asarray(sys.f(t, z), dtype=float)

    def piece(i):
        h = t[i + 1] - t[i]
        y0, y1, f0, f1 = z[i], z[i + 1], fz[i], fz[i + 1]

        def ev(tt):
            s = ((np.asarray(tt) - t[i]) / h)[..., None]
            h00 = 2 * s**3 - 3 * s**2 + 1
            h10 = s**3 - 2 * s**2 + s
            h01 = -2 * s**3 + 3 * s**2
            h11 = s**3 - s**2
            y = h00 * y0 + h * h10 * f0 + h01 * y1 + h * h11 * f1
            dy = ((6 * s**2 - 6 * s) * (y0 - y1) / h + (3 * s**2 - 4 * s + 1) * f0
                  + (3 * s**2 - 2 * s) * f1)
            return y, dy
        return ev

    return StagewiseCurve.build(t, [piece(i) for i in range(len(t) - 1)], continuity="C1")


def residual_at(sys, curve: CurveEval, t, stage: int | None = None) -> np.ndarray:
    """``ydot(t) - f(t, y(t))`` for the curve, optionally on a given stage."""
    t = np.asarray(t, dtype=float)
    y, ydot = curve(t) if stage is None else curve.on_stage(stage, t)
    return ydot - np.asarray(sys.f(t, y), dtype=float)


@dataclass
class ResidualReport:
    """Sampled residual of one curve over a skeleton.

    Samples are taken stage by stage, so node times appear twice (once as a
    stage end, once as the next stage start).
    """

    t: np.ndarray
    r: np.ndarray             # (samples, n)
    stage_index: np.ndarray   # 1-based, per sample
    stage_l2: np.ndarray      # sqrt of the stage integral of ||r||_2^2
    stage_sup: np.ndarray     # grid max of ||r||_inf on the stage
    mean_h: float

    @property
    def stage_l2_squared(self) -> np.ndarray:
        return self.stage_l2 ** 2

    @property
    def global_max(self) -> float:
        return float(np.max(self.stage_sup)) if self.stage_sup.size else 0.0

    @property
    def objective_l2(self) -> float:
        """Half the squared L2 norm over the whole interval."""
        return 0.5 * float(np.sum(self.stage_l2 ** 2))

    def write_csv(self, path):
        n = self.r.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"r_{j}" for j in range(1, n + 1)] + ["stage_index"])
            for ti, ri, si in zip(self.t, self.r, self.stage_index):
                w.writerow([format(ti, ".17g")] + [format(v, ".17g") for v in ri] + [int(si)])


def report(sys, curve: CurveEval, skel: Skeleton, refine: int = 8) -> ResidualReport:
    """Sample the residual of ``curve`` on the refined skeleton mesh.

    Per stage, the L2 norm uses the composite trapezoidal rule on the
    ``refine + 1`` sample points and the sup is the grid maximum of the
    componentwise maximum.
    """
    if refine == 1:
        warnings.warn("refine=1 samples only the nodes; stage sups will be underestimated",
                      stacklevel=2)
    mesh = refine_mesh(skel.times, refine)
    ts, rs, idx, l2, sup = [], [], [], [], []
    for i in range(1, skel.n_stages + 1):
        tt = mesh[(i - 1) * refine: i * refine + 1]
        r = residual_at(sys, curve, tt, stage=i)
        if not np.all(np.isfinite(r)):
            raise FloatingPointError(f"non-finite residual on stage {i}")
        sq = np.sum(r * r, axis=1)
        l2.append(np.sqrt(trapezoid(sq, tt)))
        sup.append(np.max(np.abs(r)))
        ts.append(tt)
        rs.append(r)
        idx.append(np.full(tt.shape, i))
    n = skel.dim
    cat = (lambda xs, shape: np.concatenate(xs) if xs else np.zeros(shape))
    return ResidualReport(
        t=cat(ts, (0,)), r=cat(rs, (0, n)), stage_index=cat(idx, (0,)).astype(int),
        stage_l2=np.array(l2), stage_sup=np.array(sup), mean_h=skel.mean_stepsize())


# -- work-precision ---------------------------------------------------------------

@dataclass
class WorkPrecision:
    k: np.ndarray
    rtol: np.ndarray
    atol: np.ndarray
    mean_h: np.ndarray
    max_residual: np.ndarray
    slope: float
    intercept: float
    fit_k: np.ndarray
    const4: float
    const5: float
    skipped: list
    low_confidence: bool

    def rows(self):
        return list(zip(self.k.tolist(), self.rtol.tolist(), self.mean_h.tolist(),
                        self.max_residual.tolist()))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "rtol", "mean_h", "max_residual"])
            for k, rt, h, e in self.rows():
                w.writerow([k, format(rt, ".17g"), format(h, ".17g"), format(e, ".17g")])

    def summary(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "fit_k": self.fit_k.tolist(), "const4": self.const4, "const5": self.const5,
                "n_samples": int(self.k.size), "skipped": self.skipped,
                "low_confidence": self.low_confidence}


def fit_loglog_slope(h, err):
    """Least-squares slope and intercept of ``log err`` against ``log h``."""
    slope, intercept = np.polyfit(np.log(h), np.log(err), 1)
    return float(slope), float(intercept)


def work_precision(sys, t0, tf, y0, nsamp: int = 40, refine: int = 8) -> WorkPrecision:
    """Max dense-output residual against mean step size over a tolerance sweep.

    Sample ``k`` uses ``rtol = 2**-k`` and ``atol = 2**-(k+1)``.  The slope is
    fitted over the half of the samples with the smallest mean step size.
    """
    if nsamp < 4:
        raise ValueError("nsamp must be at least 4")
    ks, rt, at, hs, errs, skipped = [], [], [], [], [], []
    for k in range(1, nsamp + 1):
        rtol, atol = 2.0 ** -k, 2.0 ** -(k + 1)
        try:
            sol = dp45.integrate(sys, t0, tf, y0, rtol=rtol, atol=atol)
        except (ArithmeticError, RuntimeError) as exc:
            skipped.append({"k": k, "error": f"{type(exc).__name__}: {exc}"})
            continue
        t = refine_mesh(sol.t, refine)
        y, dy = dp45.dense_eval(sol, t)
        res = dy - np.asarray(sys.f(t, y))
        ks.append(k)
        rt.append(rtol)
        at.append(atol)
        hs.append(float(np.mean(np.diff(sol.t))))
        errs.append(float(np.max(np.abs(res))))
    if len(ks) < 2:
        raise RuntimeError("fewer than two work-precision samples succeeded")
    ks, hs, errs = np.array(ks), np.array(hs), np.array(errs)
    order = np.argsort(hs)
    fit = np.sort(order[: max(2, len(hs) // 2)])
    good = fit[errs[fit] > 0]
    slope, intercept = fit_loglog_slope(hs[good], errs[good]) if len(good) >= 2 else (np.nan, np.nan)
    k2 = min(len(hs) - 1, max(0, nsamp // 2 - 1))  # the listing's floor(nsamp/2), 1-based
    return WorkPrecision(
        k=ks, rtol=np.array(rt), atol=np.array(at), mean_h=hs, max_residual=errs,
        slope=slope, intercept=intercept, fit_k=ks[good],
        const4=float(errs[k2] / hs[k2] ** 4), const5=float(errs[k2] / hs[k2] ** 5),
        skipped=skipped, low_confidence=len(good) < 3)
