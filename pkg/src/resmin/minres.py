"""Numerical per-stage minimal-residual interpolation for general systems.

Each stage ``[t_start, t_end]`` is cut into ``M`` equal subintervals.  The
interior grid states are the unknowns; the residual on subinterval ``k`` is

    u_k = (X_{k+1} - X_k) / h - f(t_{k+1/2}, (X_k + X_{k+1}) / 2)

(midpoint collocation) or the trapezoidal variant averaging ``f`` at the two
nodes.  The L2 problem is a nonlinear least-squares problem solved with a
Levenberg-Marquardt iteration on the sparse block-bidiagonal Jacobian.  The
stage-Linf problem is approached by p-norm continuation warm-started from the
L2 solution and finished by a sequential linear-programming polish.
"""

from __future__ import annotations

import csv
import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.sparse.linalg import spsolve

from .errors import DegenerateStage, DomainError, NonConvergence
from .skeleton import Skeleton, Stage

SCHEMES = ("midpoint", "trapezoidal")
DEGENERATE_ALPHA = 1e-15


@dataclass(frozen=True)
class TranscriptionConfig:
    """Discretization and optimizer settings shared by every stage solve.

    Parameters
    ----------
    M : int
        Subintervals per stage.
    scheme : {"midpoint", "trapezoidal"}
        Collocation rule for ``f`` on each subinterval.
    gtol, xtol : float
        Stop when the scaled gradient max-norm is below ``gtol`` or the step
        is below ``xtol`` relative to the iterate.
    max_iter : int
        Iteration cap for each Levenberg-Marquardt solve.
    p_ladder : tuple of int
        Exponents for the Linf continuation; the first must be 2.
    switch_threshold : float
        Relative band (times alpha) used by the bang-bang diagnostics.
    polish : bool
        Finish the Linf continuation with linear-programming steps.
    """

    M: int = 2000
    scheme: str = "midpoint"
    gtol: float = 1e-10
    xtol: float = 1e-12
    max_iter: int = 500
    p_ladder: tuple = (2, 4, 8, 16, 32, 64, 128)
    switch_threshold: float = 0.02
    polish: bool = True

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"M must be an integer >= 2, got {self.M}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not (self.gtol > 0 and self.xtol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        ladder = tuple(self.p_ladder)
        if not ladder or ladder[0] != 2 or any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError("p_ladder must start at 2 and increase")
        if not 0 < self.switch_threshold < 1:
            raise ValueError("switch_threshold must lie in (0, 1)")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "p_ladder", ladder)


# -- transcription ------------------------------------------------------------------

class Transcription:
    """Collocation residual and its Jacobian for one stage.

    The unknown vector holds ``X_1 .. X_{M-1}`` flattened row-wise; ``X_0`` and
    ``X_M`` are pinned to the stage endpoints.
    """

    def __init__(self, sys, stage: Stage, cfg: TranscriptionConfig):
        if stage.dim != sys.dim:
            raise ValueError(f"stage has dimension {stage.dim}, system has {sys.dim}")
        self.sys, self.stage, self.cfg = sys, stage, cfg
        self.M, self.n = cfg.M, sys.dim
        self.t = np.linspace(stage.t_start, stage.t_end, self.M + 1)
        self.t[0], self.t[-1] = stage.t_start, stage.t_end
        self.h = stage.duration / self.M
        self.tc = 0.5 * (self.t[:-1] + self.t[1:])
        self._sparsity = self._pattern()

    @property
    def n_unknowns(self) -> int:
        return (self.M - 1) * self.n

    def full(self, x) -> np.ndarray:
        """Grid states ``(M+1, n)`` from the interior unknown vector."""
        X = np.empty((self.M + 1, self.n))
        X[0], X[-1] = self.stage.z_start, self.stage.z_end
        X[1:-1] = np.asarray(x, dtype=float).reshape(self.M - 1, self.n)
        return X

    def chord(self) -> np.ndarray:
        """Linear interpolation between the endpoints (the initial guess)."""
        s = (self.t[1:-1] - self.t[0]) / self.stage.duration
        X = self.stage.z_start + s[:, None] * (self.stage.z_end - self.stage.z_start)
        return X.ravel()

    def _f(self, t, x):
        try:
            return np.asarray(self.sys.f(t, x), dtype=float)
        except DomainError as exc:
            k = next((k for k in range(len(t)) if not self.sys.domain(t[k], x[k])), None)
            where = "" if k is None else f" at grid point t={t[k]!r}, x={x[k].tolist()}"
            raise DomainError(f"{exc}{where}") from exc

    def residual(self, X) -> np.ndarray:
        """Residual samples ``u`` with shape ``(M, n)`` for full grid states."""
        dX = np.diff(X, axis=0) / self.h
        if self.cfg.scheme == "midpoint":
            return dX - self._f(self.tc, 0.5 * (X[:-1] + X[1:]))
        fX = self._f(self.t, X)
        return dX - 0.5 * (fX[:-1] + fX[1:])

    def _pattern(self):
        M, n = self.M, self.n
        i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        k = np.arange(M)[:, None, None]
        rows = np.broadcast_to(k * n + i, (M, n, n))
        left_cols = np.broadcast_to((k - 1) * n + j, (M, n, n))
        right_cols = np.broadcast_to(k * n + j, (M, n, n))
        # X_0 and X_M are fixed, so their blocks are dropped
        return rows, left_cols, right_cols

    def jacobian(self, X) -> sp.csr_matrix:
        """Sparse ``d u / d x`` of shape ``(M n, (M-1) n)``."""
        M, n, h = self.M, self.n, self.h
        eye = np.eye(n)
        if self.cfg.scheme == "midpoint":
            A = np.asarray(self.sys.jac(self.tc, 0.5 * (X[:-1] + X[1:])), dtype=float)
            left = -eye / h - 0.5 * A
            right = eye / h - 0.5 * A
        else:
            B = np.asarray(self.sys.jac(self.t, X), dtype=float)
            left = -eye / h - 0.5 * B[:-1]
            right = eye / h - 0.5 * B[1:]
        rows, lc, rc = self._sparsity
        r = np.concatenate([rows[1:].ravel(), rows[:-1].ravel()])
        c = np.concatenate([lc[1:].ravel(), rc[:-1].ravel()])
        v = np.concatenate([left[1:].ravel(), right[:-1].ravel()])
        return sp.csr_matrix((v, (r, c)), shape=(M * n, (M - 1) * n))


# -- Levenberg-Marquardt ---------------------------------------------------------------

@dataclass
class _LMResult:
    x: np.ndarray
    value: float
    iterations: int
    grad_norm: float
    converged: bool
    message: str


def _levenberg_marquardt(model: Callable, x0, gtol, xtol, max_iter,
                         gscale: float = 1.0) -> _LMResult:
    """Damped generalized Gauss-Newton iteration.

    ``model(x)`` returns ``(value, gradient, H)`` with ``H`` a sparse positive
    semidefinite curvature matrix, or raises :class:`DomainError`, which is
    treated as a rejected step.  Damping follows Nielsen's gain-ratio update.
    The gradient test uses ``gscale * max|g|``.
    """
    x = np.array(x0, dtype=float)
    F, g, H = model(x)
    gnorm = gscale * float(np.max(np.abs(g))) if g.size else 0.0
    if gnorm <= gtol:
        return _LMResult(x, F, 0, gnorm, True, "gradient below tolerance")
    diag = H.diagonal()
    mu = 1e-3 * max(float(np.max(diag)), 1e-300)
    nu = 2.0
    ident = sp.identity(x.size, format="csc")
    for it in range(1, max_iter + 1):
        delta = spsolve((H + mu * ident).tocsc(), -g)
        if not np.all(np.isfinite(delta)):
            mu *= nu
            nu *= 2
            continue
        if np.max(np.abs(delta)) <= xtol * (np.max(np.abs(x)) + xtol):
            return _LMResult(x, F, it, gnorm, True, "step below tolerance")
        predicted = -(g @ delta) - 0.5 * (delta @ (H @ delta))
        try:
            F_new, g_new, H_new = model(x + delta)
        except DomainError:
            F_new = np.inf
        rho = (F - F_new) / predicted if predicted > 0 else -1.0
        if rho > 0:
            x = x + delta
            F, g, H = F_new, g_new, H_new
            gnorm = gscale * float(np.max(np.abs(g)))
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
            if gnorm <= gtol:
                return _LMResult(x, F, it, gnorm, True, "gradient below tolerance")
        else:
            mu *= nu
            nu *= 2.0
    return _LMResult(x, F, max_iter, gnorm, False, "iteration limit reached")


def _gradient_scale(tr: Transcription, scale: float) -> float:
    """Factor turning the raw gradient into a residual-sized quantity.

    The curvature of the transcription has a condition number growing like
    ``M**2``; a smooth error of size ``e`` in the scaled residual shows up as
    a gradient of only about ``e / (scale * M)``.  Multiplying by
    ``scale * M`` makes ``gtol`` a bound on the residual error itself.
    """
    return scale * tr.M


def _l2_model(tr: Transcription, scale: float):
    h = tr.h

    def model(x):
        X = tr.full(x)
        u = tr.residual(X).ravel() / scale
        J = tr.jacobian(X) / scale
        value = 0.5 * h * float(u @ u)
        g = J.T @ (h * u)
        H = (J.T @ J) * h
        return value, g, H.tocsc()
    return model


def _pnorm_model(tr: Transcription, p: float, scale: float):
    """``(1/p) sum h |u/scale|^p`` with its generalized Gauss-Newton curvature."""
    h = tr.h

    def model(x):
        X = tr.full(x)
        w = tr.residual(X).ravel() / scale
        J = tr.jacobian(X) / scale
        a = np.abs(w)
        value = h * float(np.sum(a ** p)) / p
        g = J.T @ (h * np.sign(w) * a ** (p - 1))
        curv = h * (p - 1) * a ** (p - 2)
        H = J.T @ sp.diags(curv) @ J
        return value, g, H.tocsc()
    return model


# -- solutions ---------------------------------------------------------------------

@dataclass
class StageSolution:
    """Result of one stage minimization.

    ``X`` holds the ``M+1`` grid states with both endpoints pinned; ``u`` the
    residual on each of the ``M`` subintervals, sampled at ``tc``.  For the L2
    problem ``lam = -u``; for stage-Linf ``v = u / alpha``.
    """

    stage: Stage
    norm: str
    scheme: str
    t: np.ndarray
    X: np.ndarray
    tc: np.ndarray
    u: np.ndarray
    objective: float
    alpha: float
    iterations: int
    grad_norm: float
    converged: bool
    message: str = ""
    lam: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    ladder: list = field(default_factory=list)
    degenerate: bool = False

    @property
    def max_abs_u(self) -> float:
        return float(np.max(np.abs(self.u))) if self.u.size else 0.0

    @property
    def M(self) -> int:
        return self.u.shape[0]

    def to_dict(self) -> dict:
        st = self.stage
        return {
            "stage": st.index, "t_start": st.t_start, "t_end": st.t_end,
            "norm": self.norm, "scheme": self.scheme, "M": self.M,
            "objective": self.objective, "alpha": self.alpha,
            "max_abs_u": self.max_abs_u,
            "converged": self.converged, "iterations": self.iterations,
            "grad_norm": self.grad_norm, "message": self.message,
            "degenerate": self.degenerate, "ladder": self.ladder,
            "t": self.t.tolist(), "X": self.X.tolist(),
            "tc": self.tc.tolist(), "u": self.u.tolist(),
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    def csv_rows(self):
        """One row per collocation point: ``t, x_1..x_n, u_1..u_n``.

        ``x`` is the collocation state, the average of the two grid states.
        """
        xc = 0.5 * (self.X[:-1] + self.X[1:])
        for tk, xk, uk in zip(self.tc, xc, self.u):
            yield [tk, *xk, *uk]

    def write_csv(self, path):
        n = self.X.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x_{j}" for j in range(1, n + 1)]
                       + [f"u_{j}" for j in range(1, n + 1)])
            for row in self.csv_rows():
                w.writerow([format(v, ".17g") for v in row])


def _solution(tr, X, norm, res: _LMResult, ladder=None) -> StageSolution:
    u = tr.residual(X)
    alpha = float(np.max(np.abs(u)))
    if norm == "l2":
        objective = 0.5 * tr.h * float(np.sum(u * u))
    else:
        objective = alpha
    sol = StageSolution(
        stage=tr.stage, norm=norm, scheme=tr.cfg.scheme, t=tr.t, X=X, tc=tr.tc, u=u,
        objective=objective, alpha=alpha, iterations=res.iterations,
        grad_norm=res.grad_norm, converged=res.converged, message=res.message,
        ladder=list(ladder or []))
    if norm == "l2":
        sol.lam = -u
    return sol


def minimize_l2_stage(sys, stage: Stage, cfg: TranscriptionConfig | None = None,
                      x0=None) -> StageSolution:
    """Minimize half the squared L2 norm of the residual on one stage.

    Starts from the chord between the endpoints unless ``x0`` (interior
    unknowns) is given.  Raises :class:`NonConvergence` with the partial
    solution attached when the iteration limit is hit.
    """
    cfg = cfg or TranscriptionConfig()
    tr = Transcription(sys, stage, cfg)
    x0 = tr.chord() if x0 is None else np.asarray(x0, dtype=float).ravel()
    u0 = tr.residual(tr.full(x0))
    scale = max(float(np.max(np.abs(u0))), 1e-300)
    res = _levenberg_marquardt(_l2_model(tr, scale), x0, cfg.gtol, cfg.xtol, cfg.max_iter,
                               gscale=_gradient_scale(tr, scale))
    sol = _solution(tr, tr.full(res.x), "l2", res)
    if not res.converged:
        raise NonConvergence(f"L2 solve on stage {stage.index}: {res.message}", sol)
    return sol


def _lp_polish(tr: Transcription, x, max_rounds=40):
    """Sequential LP: minimize the max residual of the linearized model.

    Each round solves ``min a  s.t.  |u + J d| <= a`` inside a box trust
    region and accepts the step only if the true max residual drops.
    """
    X = tr.full(x)
    u = tr.residual(X).ravel()
    alpha = float(np.max(np.abs(u)))
    if alpha == 0.0:
        return x, 0, "already zero"
    s = alpha
    dscale = s * tr.h  # steps of this size move u by about s
    # u is a difference quotient, so it cannot resolve changes below this
    noise = 16 * np.finfo(float).eps * (float(np.max(np.abs(X))) / tr.h + alpha)
    radius = float(tr.M)
    nvar = x.size
    msg = "round limit reached"
    for rnd in range(1, max_rounds + 1):
        J = tr.jacobian(X) * (dscale / s)
        ones = np.ones((J.shape[0], 1))
        A = sp.vstack([sp.hstack([J, -ones]), sp.hstack([-J, -ones])]).tocsr()
        b = np.concatenate([-u / s, u / s])
        c = np.zeros(nvar + 1)
        c[-1] = 1.0
        bounds = [(-radius, radius)] * nvar + [(0, None)]
        lp = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs",
                     options={"primal_feasibility_tolerance": 1e-10,
                              "dual_feasibility_tolerance": 1e-10})
        if lp.status != 0:
            msg = f"LP failed: {lp.message}"
            break
        predicted = alpha / s - lp.x[-1]
        # below the LP feasibility tolerance or the rounding floor of u the
        # prediction is noise
        if predicted <= max(1e-9, noise / s):
            msg = "no predicted decrease"
            break
        x_new = x + dscale * lp.x[:-1]
        try:
            X_new = tr.full(x_new)
            u_new = tr.residual(X_new).ravel()
            alpha_new = float(np.max(np.abs(u_new)))
        except DomainError:
            alpha_new = np.inf
        actual = (alpha - alpha_new) / s
        if actual > 0:
            x, X, u, alpha = x_new, X_new, u_new, alpha_new
            if actual > 0.75 * predicted:
                radius *= 2.0
            elif actual < 0.25 * predicted:
                radius *= 0.5
            if actual <= 1e-12:
                msg = "decrease below tolerance"
                break
        else:
            radius *= 0.25
            if predicted * s <= 100 * noise:
                msg = "rounding level reached"
                break
            if radius < 1e-12:
                msg = "trust region collapsed"
                break
    return x, rnd, msg


def minimize_linf_stage(sys, stage: Stage, cfg: TranscriptionConfig | None = None,
                        warm: StageSolution | None = None) -> StageSolution:
    """Minimize the stage max-norm of the residual by p-norm continuation.

    The L2 minimizer (``warm`` if given) seeds the ladder; every later rung
    minimizes ``sum h |u|^p`` warm-started from the previous rung.  With
    ``cfg.polish`` a sequential LP step then removes the residual bias of the
    finite exponent.  Stages whose minimal max residual is below 1e-15 are
    returned with ``alpha = 0`` and a :class:`DegenerateStage` warning.
    """
    cfg = cfg or TranscriptionConfig()
    if warm is None:
        try:
            warm = minimize_l2_stage(sys, stage, cfg)
        except NonConvergence as exc:
            warm = exc.solution
    tr = Transcription(sys, stage, cfg)
    x = warm.X[1:-1].ravel().copy()
    ladder = [{"p": 2, "alpha": warm.alpha, "iterations": warm.iterations,
               "converged": warm.converged}]
    iterations, converged, gnorm, msg = warm.iterations, warm.converged, warm.grad_norm, ""
    for p in cfg.p_ladder[1:]:
        a = float(np.max(np.abs(tr.residual(tr.full(x)))))
        if a < DEGENERATE_ALPHA:
            break
        res = _levenberg_marquardt(_pnorm_model(tr, p, a), x, cfg.gtol, cfg.xtol, cfg.max_iter,
                                   gscale=_gradient_scale(tr, a))
        x = res.x
        iterations += res.iterations
        converged, gnorm, msg = res.converged, res.grad_norm, res.message
        ladder.append({"p": p, "alpha": float(np.max(np.abs(tr.residual(tr.full(x))))),
                       "iterations": res.iterations, "converged": res.converged})
    if cfg.polish:
        x, rounds, pmsg = _lp_polish(tr, x)
        iterations += rounds
        alpha = float(np.max(np.abs(tr.residual(tr.full(x)))))
        ladder.append({"p": "lp", "alpha": alpha, "iterations": rounds, "message": pmsg})
        # the LP certifies optimality of the last linearization on its own
        converged, msg = pmsg != "round limit reached" and not pmsg.startswith("LP failed"), pmsg
    result = _LMResult(x, 0.0, iterations, gnorm, converged, msg)
    sol = _solution(tr, tr.full(x), "stage_linf", result, ladder)
    if sol.alpha < DEGENERATE_ALPHA:
        warnings.warn(f"stage {stage.index} has a vanishing minimal residual",
                      DegenerateStage, stacklevel=2)
        sol.u = np.zeros_like(sol.u)
        sol.alpha = sol.objective = 0.0
        sol.degenerate = True
        sol.v = np.zeros_like(sol.u)
    else:
        sol.v = sol.u / sol.alpha
    if not converged:
        raise NonConvergence(f"stage-Linf solve on stage {stage.index}: {msg}", sol)
    return sol


# -- diagnostics -----------------------------------------------------------------------

def evaluate_on_grid(sys, stage: Stage, curve, cfg: TranscriptionConfig | None = None):
    """Discrete residual of an arbitrary curve on the transcription grid.

    ``curve(t)`` returns states of shape ``t.shape + (n,)`` (a ``(y, ydot)``
    pair is also accepted).  The endpoints are pinned to the stage values so
    the result is a feasible point of the stage problems.  Returns
    ``(u, half_l2_squared, max_abs_u)``.
    """
    cfg = cfg or TranscriptionConfig()
    tr = Transcription(sys, stage, cfg)
    X = curve(tr.t)
    if isinstance(X, tuple):
        X = X[0]
    X = np.array(X, dtype=float).reshape(tr.M + 1, tr.n)
    X[0], X[-1] = stage.z_start, stage.z_end
    u = tr.residual(X)
    return u, 0.5 * tr.h * float(np.sum(u * u)), float(np.max(np.abs(u)))


def adjoint_check_l2(sol: StageSolution, sys) -> dict:
    """Finite-difference defect of the adjoint equation for ``lam = -u``.

    At interior collocation points, returns the max over ``k`` of
    ``|(lam_{k+1} - lam_{k-1}) / (2h) + f_x^T lam_k| / (1 + |lam_k|)``
    (max-norms).  Second order in ``h`` for a converged solve.
    """
    lam = -sol.u
    h = sol.tc[1] - sol.tc[0]
    if sol.scheme == "midpoint":
        A = np.asarray(sys.jac(sol.tc, 0.5 * (sol.X[:-1] + sol.X[1:])), dtype=float)
    else:
        B = np.asarray(sys.jac(sol.t, sol.X), dtype=float)
        A = 0.5 * (B[:-1] + B[1:])
    dlam = (lam[2:] - lam[:-2]) / (2 * h)
    rhs = np.einsum("kji,kj->ki", A[1:-1], lam[1:-1])
    defect = np.max(np.abs(dlam + rhs), axis=1) / (1 + np.max(np.abs(lam[1:-1]), axis=1))
    k = int(np.argmax(defect))
    return {"defect": float(defect[k]), "t_worst": float(sol.tc[k + 1]),
            "lambda_start": lam[0].tolist(), "lambda_end": lam[-1].tolist(),
            "converged": sol.converged}


def _runs(mask):
    """``(start, stop)`` index pairs of consecutive ``True`` entries."""
    d = np.diff(np.concatenate([[0], mask.astype(int), [0]]))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def bangbang_check_linf(sol: StageSolution, threshold: float | None = None,
                        min_run: int = 5) -> dict:
    """Classify each component of the normalized control ``v = u / alpha``.

    Per component: the bang fraction (share of points with
    ``|u_j| >= (1 - threshold) alpha``), the number of sign changes among
    points outside the ``threshold * alpha`` band, and the singular
    intervals (at least ``min_run`` consecutive points inside the band).
    For scalar problems a component singular over the whole stage is
    flagged, since that cannot happen at an optimum.
    """
    thr = 0.02 if threshold is None else threshold
    n = sol.u.shape[1]
    comps = []
    for j in range(n):
        uj = sol.u[:, j]
        if sol.degenerate or sol.alpha == 0:
            comps.append({"component": j + 1, "bang_fraction": float("nan"), "switches": 0,
                          "singular_intervals": [], "singular_everywhere": False})
            continue
        a = np.abs(uj)
        bang = float(np.mean(a >= (1 - thr) * sol.alpha))
        outside = uj[a > thr * sol.alpha]
        switches = int(np.count_nonzero(np.diff(np.sign(outside)) != 0))
        small = a < thr * sol.alpha
        runs = [(float(sol.tc[i]), float(sol.tc[k - 1])) for i, k in _runs(small)
                if k - i >= min_run]
        comps.append({"component": j + 1, "bang_fraction": bang, "switches": switches,
                      "singular_intervals": runs, "singular_everywhere": bool(np.all(small))})
    scalar_ok = not (n == 1 and comps[0]["singular_everywhere"])
    if not scalar_ok:
        warnings.warn(f"scalar stage {sol.stage.index} is singular over the whole stage",
                      RuntimeWarning, stacklevel=2)
    return {"stage": sol.stage.index, "alpha": sol.alpha, "components": comps,
            "scalar_nonsingular": scalar_ok}


# -- whole skeleton ------------------------------------------------------------------

@dataclass
class SkeletonResult:
    norm: str
    solutions: list
    failures: list

    @property
    def complete(self) -> bool:
        return not self.failures

    def summary(self) -> dict:
        sols = [s for s in self.solutions if s is not None]
        table = [{"stage": s.stage.index, "t_start": s.stage.t_start, "t_end": s.stage.t_end,
                  "objective": s.objective, "max_abs_u": s.max_abs_u,
                  "converged": s.converged, "iterations": s.iterations} for s in sols]
        return {
            "norm": self.norm,
            "n_stages": len(self.solutions),
            "total_objective": float(sum(s.objective for s in sols)),
            "global_max": max((s.max_abs_u for s in sols), default=0.0),
            "stages": table,
            "failures": self.failures,
        }


def _workers(requested=None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("RESMIN_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def minimize_skeleton(sys, skel: Skeleton, norm: str = "l2",
                      cfg: TranscriptionConfig | None = None, workers=None) -> SkeletonResult:
    """Solve every stage independently and collect the results.

    A stage that fails does not stop the run: its error is recorded in
    ``failures`` and, for :class:`NonConvergence`, the partial solution is
    kept in place.  Worker threads default to ``RESMIN_THREADS`` or up to 4.
    """
    if norm not in ("l2", "stage_linf"):
        raise ValueError(f"norm must be 'l2' or 'stage_linf', got {norm!r}")
    cfg = cfg or TranscriptionConfig()
    solve = minimize_l2_stage if norm == "l2" else minimize_linf_stage

    def run(stage):
        try:
            return solve(sys, stage, cfg), None
        except NonConvergence as exc:
            return exc.solution, {"stage": stage.index, "error": "NonConvergence",
                                  "message": str(exc)}
        except (DomainError, ValueError, FloatingPointError) as exc:
            return None, {"stage": stage.index, "error": type(exc).__name__,
                          "message": str(exc)}

    stages = skel.stages()
    nw = _workers(workers)
    if nw == 1 or len(stages) < 2:
        out = [run(s) for s in stages]
    else:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            out = list(pool.map(run, stages))
    return SkeletonResult(norm, [s for s, _ in out], [e for _, e in out if e])
