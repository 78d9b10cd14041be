"""Solver skeletons, stages and refined evaluation meshes.

A skeleton is the list of nodes ``(t_i, z_i)`` an ODE solver reports at its
accepted steps.  Every minimization in this package works stage by stage on
``[t_{i-1}, t_i]``.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidFactor, ParseError, ValidationError

# nodes closer than this (relative) trigger a warning
NEAR_DUPLICATE_RTOL = 1e-14


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Stage:
    """The interval between two consecutive skeleton nodes.

    ``index`` runs from 1 to N so that stage ``i`` spans ``[t_{i-1}, t_i]``.
    """

    index: int
    t_start: float
    t_end: float
    z_start: np.ndarray
    z_end: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z_start", _frozen(np.atleast_1d(self.z_start)))
        object.__setattr__(self, "z_end", _frozen(np.atleast_1d(self.z_end)))
        if not self.t_end > self.t_start:
            raise ValidationError("stage duration must be positive", self.index)
        if self.z_start.shape != self.z_end.shape:
            raise ValidationError("stage endpoints differ in dimension", self.index)

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def dim(self) -> int:
        return self.z_start.shape[0]

    def to_t(self, s):
        return self.t_start + np.asarray(s) * self.duration

    def to_s(self, t):
        return (np.asarray(t) - self.t_start) / self.duration

    def __repr__(self):
        return (f"Stage({self.index}, [{self.t_start!r}, {self.t_end!r}], "
                f"{self.z_start.tolist()} -> {self.z_end.tolist()})")


class Skeleton:
    """Validated, immutable skeleton of an ODE solution.

    Parameters
    ----------
    times : array_like, shape (N+1,)
        Strictly increasing, finite node times.
    values : array_like, shape (N+1, n) or (N+1,)
        Node values; a 1-D array is read as a scalar system.
    """

    def __init__(self, times, values):
        t = np.asarray(times, dtype=float)
        z = np.asarray(values, dtype=float)
        if t.ndim != 1:
            raise ValidationError("times must be one-dimensional")
        if z.ndim == 1:
            z = z[:, None]
        if z.ndim != 2:
            raise ValidationError("values must be a 2-D array (nodes x dim)")
        if z.shape[0] != t.shape[0]:
            raise ValidationError(
                f"{t.shape[0]} times but {z.shape[0]} value rows",
                min(t.shape[0], z.shape[0]))
        if t.shape[0] < 1:
            raise ValidationError("skeleton needs at least one node")
        if z.shape[1] < 1:
            raise ValidationError("dimension must be positive")
        for i in range(t.shape[0]):
            if not np.isfinite(t[i]):
                raise ValidationError("non-finite time", i)
            if not np.all(np.isfinite(z[i])):
                raise ValidationError("non-finite value", i)
            if i > 0 and not t[i] > t[i - 1]:
                raise ValidationError("times must be strictly increasing", i)
        for i in range(1, t.shape[0]):
            scale = max(np.max(np.abs(z[i])), np.max(np.abs(z[i - 1])))
            if np.max(np.abs(z[i] - z[i - 1])) <= NEAR_DUPLICATE_RTOL * scale:
                warnings.warn(f"skeleton values at index {i} and {i - 1} "
                              "are (nearly) identical", stacklevel=2)
        self._t = _frozen(t)
        self._z = _frozen(z)

    @property
    def times(self) -> np.ndarray:
        return self._t

    @property
    def values(self) -> np.ndarray:
        return self._z

    @property
    def dim(self) -> int:
        return self._z.shape[1]

    @property
    def n_stages(self) -> int:
        return self._t.shape[0] - 1

    def __len__(self):
        return self._t.shape[0]

    def stage(self, i: int) -> Stage:
        if not 1 <= i <= self.n_stages:
            raise IndexError(f"stage index {i} outside 1..{self.n_stages}")
        return Stage(i, float(self._t[i - 1]), float(self._t[i]),
                     self._z[i - 1], self._z[i])

    def stages(self) -> list[Stage]:
        return [self.stage(i) for i in range(1, self.n_stages + 1)]

    def durations(self) -> np.ndarray:
        return np.diff(self._t)

    def mean_stepsize(self) -> float:
        return float(np.mean(np.diff(self._t))) if self.n_stages else 0.0

    def __eq__(self, other):
        if not isinstance(other, Skeleton):
            return NotImplemented
        return (np.array_equal(self._t, other._t)
                and np.array_equal(self._z, other._z))

    def __repr__(self):
        return f"Skeleton(N={self.n_stages}, dim={self.dim}, t=[{self._t[0]}, {self._t[-1]}])"


def refine_mesh(times, factor: int) -> np.ndarray:
    """Insert ``factor - 1`` equally spaced points into every step.

    The original nodes are kept exactly (not recomputed), so the result has
    ``factor * (len(times) - 1) + 1`` points.
    """
    if int(factor) != factor or factor < 1:
        raise InvalidFactor(f"refinement factor must be a positive integer, got {factor}")
    factor = int(factor)
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("times must be a non-empty 1-D array")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    if factor == 1 or t.size == 1:
        return t.copy()
    frac = np.arange(factor) / factor
    inner = t[:-1, None] + frac[None, :] * np.diff(t)[:, None]
    inner[:, 0] = t[:-1]
    return np.append(inner.ravel(), t[-1])


def _format_float(x) -> str:
    return format(float(x), ".17g")


def load_skeleton(path, format: str | None = None) -> Skeleton:
    """Read a skeleton from a JSON or CSV file (format guessed from suffix)."""
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if fmt == "json":
        return _parse_json(text)
    if fmt == "csv":
        return _parse_csv(text)
    raise ParseError(f"unknown skeleton format {fmt!r}")


def _parse_json(text: str) -> Skeleton:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict) or not {"n", "t", "z"} <= doc.keys():
        raise ParseError('skeleton JSON needs keys "n", "t" and "z"')
    n = doc["n"]
    if not isinstance(n, int) or n < 1:
        raise ParseError('"n" must be a positive integer')
    t, z = doc["t"], doc["z"]
    if not isinstance(t, list) or not isinstance(z, list):
        raise ParseError('"t" and "z" must be lists')
    if len(t) != len(z):
        raise ValidationError(f"len(t)={len(t)} but len(z)={len(z)}", min(len(t), len(z)))
    for i, row in enumerate(z):
        if not isinstance(row, list) or len(row) != n:
            raise ValidationError(f"value row does not have length n={n}", i)
    try:
        tt = np.array(t, dtype=float)
        zz = np.array(z, dtype=float).reshape(len(z), n)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"non-numeric entry: {exc}") from exc
    return Skeleton(tt, zz)


def _parse_csv(text: str) -> Skeleton:
    rows = [r for r in csv.reader(text.splitlines()) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError("empty CSV")
    header = [c.strip() for c in rows[0]]
    n = len(header) - 1
    if n < 1 or header[0] != "t" or header[1:] != [f"z{j}" for j in range(1, n + 1)]:
        raise ParseError(f"CSV header must be t,z1,...,zn; got {','.join(header)}")
    t, z = [], []
    for i, row in enumerate(rows[1:]):
        if len(row) != n + 1:
            raise ValidationError(f"row has {len(row)} columns, expected {n + 1}", i)
        try:
            vals = [float(c) for c in row]
        except ValueError as exc:
            raise ParseError(f"row {i}: {exc}") from exc
        t.append(vals[0])
        z.append(vals[1:])
    if not t:
        raise ParseError("CSV has a header but no rows")
    return Skeleton(np.array(t), np.array(z))


def save_skeleton(s: Skeleton, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "json":
        # repr-based float output is shortest round-trip, hence bit-exact
        doc = {"n": s.dim, "t": s.times.tolist(), "z": s.values.tolist()}
        path.write_text(json.dumps(doc) + "\n")
    elif fmt == "csv":
        lines = [",".join(["t"] + [f"z{j}" for j in range(1, s.dim + 1)])]
        for ti, zi in zip(s.times, s.values):
            lines.append(",".join(_format_float(v) for v in (ti, *zi)))
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown skeleton format {fmt!r}")
