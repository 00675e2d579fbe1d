"""Regularization schedules t -> lambda(t).

All schedules are positive on the horizon of the problem that uses them and
expose ``value``, ``derivative`` (right derivative where the schedule has a
kink), a certified lower bound ``lower_bound(T)`` and the L1 norm of the
derivative on [0, T].  Both ``value`` and ``derivative`` accept scalars or
arrays.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import ArgumentError

__all__ = [
    "LambdaSchedule", "ConstantSchedule", "ExpDecaySchedule", "RationalSchedule",
    "PiecewiseLinearSchedule", "mu_of", "l1_distance", "derivative_sum_l1",
    "abs_integral", "schedule_from_dict",
]


class LambdaSchedule:
    """Base class.  Subclasses with a closed-form antiderivative override
    :meth:`antiderivative`; the L1 helpers then avoid quadrature."""

    kind = "abstract"
    has_antiderivative = False

    def value(self, t):
        raise NotImplementedError

    def derivative(self, t):
        raise NotImplementedError

    def antiderivative(self, t):
        raise NotImplementedError

    def left_derivative(self, t):
        """Left derivative; differs from :meth:`derivative` only at kinks."""
        return self.derivative(t)

    def breakpoints(self, T):
        """Points of (0, T) where the derivative may jump."""
        return np.empty(0)

    def lower_bound(self, T):
        raise NotImplementedError

    def upper_bound(self, T):
        raise NotImplementedError

    def l1_derivative_norm(self, T):
        return abs_integral(self.derivative, self.value, 0.0, T, self.breakpoints(T))

    def to_dict(self):
        raise NotImplementedError

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.to_dict().items() if k != "kind")
        return f"{type(self).__name__}({args})"


class ConstantSchedule(LambdaSchedule):
    kind = "constant"
    has_antiderivative = True

    def __init__(self, c):
        if not c > 0:
            raise ArgumentError(f"constant schedule must be positive, got {c!r}")
        self.c = float(c)

    def value(self, t):
        if np.ndim(t):
            return np.full(np.shape(t), self.c)
        return self.c

    def derivative(self, t):
        if np.ndim(t):
            return np.zeros(np.shape(t))
        return 0.0

    def antiderivative(self, t):
        return self.c * np.asarray(t, dtype=float)

    def lower_bound(self, T):
        return self.c

    def upper_bound(self, T):
        return self.c

    def l1_derivative_norm(self, T):
        return 0.0

    def to_dict(self):
        return {"kind": self.kind, "c": self.c}


class ExpDecaySchedule(LambdaSchedule):
    """lambda(t) = b exp(-a t) + c."""

    kind = "exponential-decay"
    has_antiderivative = True

    def __init__(self, a, b, c=0.0):
        self.a, self.b, self.c = float(a), float(b), float(c)

    def value(self, t):
        return self.b * np.exp(-self.a * np.asarray(t, dtype=float)) + self.c

    def derivative(self, t):
        return -self.a * self.b * np.exp(-self.a * np.asarray(t, dtype=float))

    def antiderivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.a == 0.0:
            return (self.b + self.c) * t
        return self.b / self.a * (1.0 - np.exp(-self.a * t)) + self.c * t

    def lower_bound(self, T):
        return float(min(self.value(0.0), self.value(T)))

    def upper_bound(self, T):
        return float(max(self.value(0.0), self.value(T)))

    def l1_derivative_norm(self, T):
        # monotone on [0, T]
        return float(abs(self.value(T) - self.value(0.0)))

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b, "c": self.c}


class RationalSchedule(LambdaSchedule):
    """lambda(t) = 1/(1 + t) + c."""

    kind = "rational"
    has_antiderivative = True

    def __init__(self, c=0.0):
        self.c = float(c)

    def value(self, t):
        return 1.0 / (1.0 + np.asarray(t, dtype=float)) + self.c

    def derivative(self, t):
        return -1.0 / (1.0 + np.asarray(t, dtype=float)) ** 2

    def antiderivative(self, t):
        t = np.asarray(t, dtype=float)
        return np.log1p(t) + self.c * t

    def lower_bound(self, T):
        return float(self.value(T))

    def upper_bound(self, T):
        return float(self.value(0.0))

    def l1_derivative_norm(self, T):
        return 1.0 - 1.0 / (1.0 + T)

    def to_dict(self):
        return {"kind": self.kind, "c": self.c}


class PiecewiseLinearSchedule(LambdaSchedule):
    """Linear interpolation of ``knots = [(t0, l0), (t1, l1), ...]`` with t0 = 0,
    extended by the last value beyond the last knot."""

    kind = "piecewise-linear"
    has_antiderivative = True

    def __init__(self, knots):
        knots = np.asarray(knots, dtype=float)
        if knots.ndim != 2 or knots.shape[1] != 2 or len(knots) < 1:
            raise ArgumentError("knots must be a list of (t, value) pairs")
        ts, vs = knots[:, 0], knots[:, 1]
        if ts[0] != 0.0:
            raise ArgumentError("first knot must be at t = 0")
        if np.any(np.diff(ts) <= 0):
            raise ArgumentError("knot times must be strictly increasing")
        self.ts, self.vs = ts, vs
        self.slopes = np.append(np.diff(vs) / np.diff(ts), 0.0)
        self._cum = np.concatenate([[0.0], np.cumsum(0.5 * (vs[1:] + vs[:-1]) * np.diff(ts))])

    def _segment(self, t):
        return np.clip(np.searchsorted(self.ts, t, side="right") - 1, 0, len(self.ts) - 1)

    def value(self, t):
        v = np.interp(t, self.ts, self.vs)
        return float(v) if np.ndim(t) == 0 else v

    def derivative(self, t):
        d = self.slopes[self._segment(t)]
        return float(d) if np.ndim(t) == 0 else d

    def left_derivative(self, t):
        i = np.clip(np.searchsorted(self.ts, t, side="left") - 1, 0, len(self.ts) - 1)
        d = np.where(np.asarray(t) <= self.ts[0], self.slopes[0], self.slopes[i])
        return float(d) if np.ndim(t) == 0 else d

    def antiderivative(self, t):
        t = np.asarray(t, dtype=float)
        i = self._segment(t)
        dt = t - self.ts[i]
        return self._cum[i] + dt * (self.vs[i] + 0.5 * self.slopes[i] * dt)

    def breakpoints(self, T):
        return self.ts[(self.ts > 0) & (self.ts < T)]

    def lower_bound(self, T):
        inside = self.vs[self.ts <= T]
        return float(min(inside.min(), self.value(T)))

    def upper_bound(self, T):
        inside = self.vs[self.ts <= T]
        return float(max(inside.max(), self.value(T)))

    def l1_derivative_norm(self, T):
        pts = np.concatenate([[0.0], self.breakpoints(T), [T]])
        return float(np.sum(np.abs(np.diff(self.value(pts)))))

    def to_dict(self):
        return {"kind": self.kind, "knots": [[float(a), float(b)] for a, b in zip(self.ts, self.vs)]}


def mu_of(schedule, t, horizon=None, left=False):
    """Return ``(mu, mu_dot)`` with ``mu = 1/lambda(t)``.

    ``left=True`` uses the left derivative of lambda (relevant only at kinks
    of a piecewise-linear schedule).
    """
    if t < 0 or (horizon is not None and t > horizon * (1 + 1e-14)):
        raise ArgumentError(f"time {t!r} outside [0, {horizon}]")
    lam = schedule.value(t)
    dlam = schedule.left_derivative(t) if left else schedule.derivative(t)
    return 1.0 / lam, -dlam / lam**2


def abs_integral(f, F, a, b, breaks=(), n=2048):
    """Integral of |f| over [a, b] given an antiderivative ``F`` of ``f``.

    ``f`` must be continuous between consecutive ``breaks``.  Sign changes are
    located on an ``n``-interval grid and refined by Brent's method, so the
    result is exact up to root-finding accuracy as long as ``f`` changes sign
    at most once per grid cell.
    """
    if b <= a:
        return 0.0
    inner = [p for p in np.atleast_1d(breaks) if a < p < b]
    grid = np.union1d(np.linspace(a, b, n + 1), inner)
    h = np.diff(grid)
    fl = np.asarray(f(grid[:-1] + 1e-9 * h), dtype=float)
    fr = np.asarray(f(grid[1:] - 1e-9 * h), dtype=float)
    Fg = np.asarray(F(grid), dtype=float)
    total = float(np.sum(np.abs(np.diff(Fg))[~(fl * fr < 0)]))
    for i in np.flatnonzero(fl * fr < 0):
        p, q = grid[i] + 1e-9 * h[i], grid[i + 1] - 1e-9 * h[i]
        r = brentq(lambda s: float(f(s)), p, q, xtol=1e-15, rtol=8.9e-16)
        Fr = float(F(r))
        total += abs(Fr - Fg[i]) + abs(Fg[i + 1] - Fr)
    return total


def _union_breaks(a, b, T):
    return np.union1d(a.breakpoints(T), b.breakpoints(T))


def l1_distance(a, b, T):
    """||a - b||_{L1(0, T)}: exact for closed-form kinds, quadrature otherwise."""
    breaks = _union_breaks(a, b, T)
    if a.has_antiderivative and b.has_antiderivative:
        return abs_integral(lambda t: a.value(t) - b.value(t),
                            lambda t: a.antiderivative(t) - b.antiderivative(t),
                            0.0, T, breaks)
    extra = []
    for s in (a, b):
        extra.extend(getattr(s, "quadrature_points", lambda T: [])(T))
    pts = np.union1d(breaks, [p for p in extra if 0 < p < T])
    edges = np.concatenate([[0.0], pts, [T]])
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = quad(lambda t: abs(a.value(t) - b.value(t)), lo, hi,
                      epsabs=1e-14, epsrel=1e-10, limit=200)
        total += val
    return total


def derivative_sum_l1(a, b, T):
    """||a' + b'||_{L1(0, T)}, i.e. the total variation of a + b on [0, T]."""
    return abs_integral(lambda t: a.derivative(t) + b.derivative(t),
                        lambda t: a.value(t) + b.value(t),
                        0.0, T, _union_breaks(a, b, T))


def schedule_from_dict(d):
    """Inverse of ``to_dict`` for the closed-form catalog kinds."""
    d = dict(d)
    kind = d.pop("kind", None)
    try:
        if kind == "constant":
            return ConstantSchedule(**d)
        if kind in ("exponential-decay", "exp"):
            return ExpDecaySchedule(**d)
        if kind == "rational":
            return RationalSchedule(**d)
        if kind == "piecewise-linear":
            return PiecewiseLinearSchedule(d["knots"])
    except (TypeError, KeyError) as exc:
        raise ArgumentError(f"schedule {kind!r}: bad parameters ({exc})") from None
    raise ArgumentError(f"unknown schedule kind {kind!r}")
