"""Built-in right-hand sides with Jacobians and known solutions.

All right-hand sides are vectorized over leading axes: ``x`` has shape
``(..., n)`` and ``t`` broadcasts against ``x[..., 0]``.  Jacobians return
``(..., n, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, ZeroParameter


@dataclass(frozen=True)
class OdeSystem:
    """An autonomous or non-autonomous first-order system ``x' = f(t, x)``."""

    name: str
    dim: int
    f: Callable
    jac: Callable
    domain: Callable = field(default=lambda t, x: True)
    # exact(t, t0, x0) -> x(t), or None when no closed form is known
    exact: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __call__(self, t, x):
        return self.f(t, x)

    @property
    def spec(self) -> str:
        if self.params:
            args = ",".join(f"{k}={v!r}" for k, v in self.params.items())
            return f"{self.name}:{args}"
        return self.name


def _vec(x):
    return np.asarray(x, dtype=float)


def dahlquist(a: float) -> OdeSystem:
    """The linear test equation ``x' = a x``."""
    a = float(a)
    if a == 0.0:
        raise ZeroParameter("Dahlquist parameter a must be nonzero")

    def f(t, x):
        return a * _vec(x)

    def jac(t, x):
        x = _vec(x)
        return np.full(x.shape + (1,), a)

    def exact(t, t0, x0):
        return np.multiply.outer(np.exp(a * (np.asarray(t, dtype=float) - t0)), _vec(x0))

    return OdeSystem("dahlquist", 1, f, jac, exact=exact, params={"a": a})


def sqrt_flow() -> OdeSystem:
    """``x' = sqrt(x)`` on ``x > 0``.

    The zero state is excluded: uniqueness fails there.
    """

    def _check(x):
        x = _vec(x)
        if np.any(~(x > 0)):
            bad = np.argwhere(~(x > 0))[0]
            raise DomainError(f"sqrt flow needs x > 0; got {x[tuple(bad)]!r} at {tuple(bad)}")
        return x

    def f(t, x):
        return np.sqrt(_check(x))

    def jac(t, x):
        x = _check(x)
        return (0.5 / np.sqrt(x))[..., None]

    def domain(t, x):
        return bool(np.all(_vec(x) > 0))

    def exact(t, t0, x0):
        dt = np.asarray(t, dtype=float) - t0
        return np.add.outer(0.5 * dt, np.sqrt(_check(x0))) ** 2

    return OdeSystem("sqrt", 1, f, jac, domain=domain, exact=exact)


def van_der_pol() -> OdeSystem:
    """Van der Pol oscillator with unit damping."""

    def f(t, x):
        x = _vec(x)
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([x2, -x1 - (x1 * x1 - 1.0) * x2], axis=-1)

    def jac(t, x):
        x = _vec(x)
        x1, x2 = x[..., 0], x[..., 1]
        J = np.empty(x.shape[:-1] + (2, 2))
        J[..., 0, 0] = 0.0
        J[..., 0, 1] = 1.0
        J[..., 1, 0] = -1.0 - 2.0 * x1 * x2
        J[..., 1, 1] = -(x1 * x1 - 1.0)
        return J

    return OdeSystem("vdp", 2, f, jac)


def sho() -> OdeSystem:
    """Simple harmonic oscillator ``y'' + y = 0`` as a first-order system."""

    def f(t, x):
        x = _vec(x)
        return np.stack([x[..., 1], -x[..., 0]], axis=-1)

    def jac(t, x):
        x = _vec(x)
        J = np.zeros(x.shape[:-1] + (2, 2))
        J[..., 0, 1] = 1.0
        J[..., 1, 0] = -1.0
        return J

    def exact(t, t0, x0):
        y0, v0 = _vec(x0)
        dt = np.asarray(t, dtype=float) - t0
        c, s = np.cos(dt), np.sin(dt)
        return np.stack([y0 * c + v0 * s, -y0 * s + v0 * c], axis=-1)

    return OdeSystem("sho", 2, f, jac, exact=exact)


_FACTORIES = {
    "dahlquist": dahlquist,
    "sqrt": sqrt_flow,
    "vdp": van_der_pol,
    "sho": sho,
}


def from_spec(spec: str) -> OdeSystem:
    """Build a problem from a CLI string such as ``dahlquist:a=3`` or ``vdp``."""
    name, _, argstr = spec.strip().partition(":")
    if name not in _FACTORIES:
        raise ValueError(f"unknown problem {name!r}; choose from {', '.join(_FACTORIES)}")
    kwargs = {}
    if argstr:
        for item in argstr.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise ValueError(f"malformed problem argument {item!r} (expected key=value)")
            try:
                kwargs[key.strip()] = float(val)
            except ValueError:
                raise ValueError(f"problem argument {key!r} is not a number: {val!r}") from None
    try:
        return _FACTORIES[name](**kwargs)
    except TypeError as exc:
        raise ValueError(f"bad arguments for problem {name!r}: {exc}") from None
