"""Bounded-variation schedules, their mollification, and the limit solve.

A :class:`BVSchedule` is piecewise affine with possible jumps.  It is
smoothed by convolution with the C-infinity bump

    rho(s) = exp(-1 / (1 - s^2)) / Z   on (-1, 1),

scaled to width ``eps``, after extending the schedule by constants outside
[0, T].  Because every piece is affine the convolution reduces to the
kernel CDF ``K`` and first moment ``M``, which are evaluated by
Gauss-Legendre quadrature to machine precision.  Away from the breakpoints
(farther than ``eps``) the mollified schedule coincides exactly with the
original one, since the kernel is symmetric.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import ArgumentError, NonConvergenceError
from .flow import FlowProblem, integrate
from .integrator import IntegratorConfig
from .schedules import LambdaSchedule, abs_integral
from .stability import PerturbationPair, _exp, stability_constant_C

__all__ = [
    "BVPiece", "BVSchedule", "MollifiedSchedule", "MollifiedSequenceConfig", "BVResult",
    "total_variation", "mollify", "bv_solve", "kernel", "kernel_cdf", "kernel_moment",
    "mollifier_l1_gap", "check_mollification", "cauchy_constants", "cauchy_bound",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(96)


def _bump(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


def _gl_left(s, weight):
    # integral over [-1, s] of weight(u) * bump(u), vectorized over s <= 0
    s = np.asarray(s, dtype=float)
    half = 0.5 * (s + 1.0)
    u = half[..., None] * _GL_NODES + (half[..., None] - 1.0)
    return half * np.sum(_GL_WEIGHTS * weight(u) * _bump(u), axis=-1)


_Z = 2.0 * float(_gl_left(0.0, np.ones_like))


def kernel(s):
    """Normalized bump on (-1, 1)."""
    return _bump(s) / _Z


def kernel_cdf(s):
    """K(s) = integral of the kernel over [-1, s]."""
    s = np.clip(np.asarray(s, dtype=float), -1.0, 1.0)
    neg = -np.abs(s)
    left = _gl_left(neg, np.ones_like) / _Z
    return np.where(s <= 0, left, 1.0 - left)


def kernel_moment(s):
    """M(s) = integral of u * kernel(u) over [-1, s]; an even function."""
    s = np.clip(np.asarray(s, dtype=float), -1.0, 1.0)
    return _gl_left(-np.abs(s), lambda u: u) / _Z


@dataclass(frozen=True)
class BVPiece:
    start: float
    end: float
    left_value: float
    right_value: float
    shape: str = "affine"

    @property
    def slope(self):
        return (self.right_value - self.left_value) / (self.end - self.start)


class BVSchedule:
    """Piecewise affine schedule on [0, T] with possible jumps.

    Adjacent pieces whose boundary values differ encode a jump.  At a jump
    the schedule takes the right value (right-continuous), and at T the
    last piece's right value.
    """

    def __init__(self, pieces):
        ps = []
        for p in pieces:
            if isinstance(p, dict):
                p = BVPiece(float(p["from"]), float(p["to"]), float(p["left_value"]),
                            float(p["right_value"]), p.get("shape", "affine"))
            ps.append(p)
        if not ps:
            raise ArgumentError("BV schedule needs at least one piece")
        if ps[0].start != 0.0:
            raise ArgumentError("first piece must start at 0")
        for prev, nxt in zip(ps, ps[1:]):
            if prev.end != nxt.start:
                raise ArgumentError(f"pieces not contiguous at {prev.end!r} / {nxt.start!r}")
        for p in ps:
            if not all(math.isfinite(u) for u in (p.start, p.end, p.left_value, p.right_value)):
                raise ArgumentError("BV schedule pieces must have finite ends and values")
            if not p.end > p.start:
                raise ArgumentError(f"empty piece [{p.start}, {p.end}]")
            if p.shape not in ("affine", "constant"):
                raise ArgumentError(f"unknown piece shape {p.shape!r}")
            if p.shape == "constant" and p.left_value != p.right_value:
                raise ArgumentError("constant piece with different left/right values")
            if min(p.left_value, p.right_value) <= 0:
                raise ArgumentError("BV schedule must be bounded away from 0")
        self.pieces = tuple(ps)
        self.T = ps[-1].end
        self._segments, self._jumps = self._extended()

    @classmethod
    def step(cls, before, after, at, T):
        return cls([BVPiece(0.0, at, before, before, "constant"),
                    BVPiece(at, T, after, after, "constant")])

    @classmethod
    def constant(cls, c, T):
        return cls([BVPiece(0.0, T, c, c, "constant")])

    @property
    def c0(self):
        return min(min(p.left_value, p.right_value) for p in self.pieces)

    @property
    def sup(self):
        return max(max(p.left_value, p.right_value) for p in self.pieces)

    def jumps(self):
        """List of ``(time, right_limit - left_limit)`` for interior jumps."""
        return [(nxt.start, nxt.left_value - prev.right_value)
                for prev, nxt in zip(self.pieces, self.pieces[1:])
                if nxt.left_value != prev.right_value]

    def total_variation(self):
        return (sum(abs(p.right_value - p.left_value) for p in self.pieces)
                + sum(abs(j) for _, j in self.jumps()))

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, self.pieces[-1].right_value)
        for p in reversed(self.pieces):
            m = (t >= p.start) & (t < p.end)
            out[m] = p.left_value + p.slope * (t[m] - p.start)
        out[t < 0] = self.pieces[0].left_value
        return float(out) if out.ndim == 0 else out

    def breakpoints(self):
        """Interior points where the schedule is not affine."""
        return np.array([s[0] for s in self._segments[1:]])

    def _extended(self):
        # (start, end, start_value, slope) with constant extension outside [0, T]
        first, last = self.pieces[0], self.pieces[-1]
        raw = [(-math.inf, 0.0, first.left_value, 0.0)]
        raw += [(p.start, p.end, p.left_value, p.slope) for p in self.pieces]
        raw.append((self.T, math.inf, last.right_value, 0.0))
        segs, jumps = [raw[0]], []
        for a, b, va, sl in raw[1:]:
            pa, pb, pva, psl = segs[-1]
            end_val = pva if math.isinf(pa) else pva + psl * (pb - pa)
            if va == end_val and sl == psl:
                segs[-1] = (pa, b, pva, psl)
                continue
            if va != end_val:
                jumps.append((a, va - end_val))
            segs.append((a, b, va, sl))
        return segs, jumps

    def to_dict(self):
        return {"pieces": [{"from": p.start, "to": p.end, "left_value": p.left_value,
                            "right_value": p.right_value, "shape": p.shape}
                           for p in self.pieces]}


def total_variation(schedule):
    """Exact total variation of a :class:`BVSchedule` on [0, T]."""
    return schedule.total_variation()


class MollifiedSchedule(LambdaSchedule):
    """Convolution of a :class:`BVSchedule` with the bump of half-width ``eps``."""

    kind = "mollified"

    def __init__(self, bv, eps):
        if not 0 < eps < bv.T / 2:
            raise ArgumentError(f"kernel width must lie in (0, T/2), got {eps!r}")
        self.bv = bv
        self.eps = float(eps)
        self._segments = bv._segments
        self._jump_t = np.array([j[0] for j in bv._jumps])
        self._jump_v = np.array([j[1] for j in bv._jumps])
        self._starts = np.array([s[0] for s in self._segments])

    def _eval(self, t):
        eps = self.eps
        lo, hi = t - eps, t + eps
        i0 = int(np.searchsorted(self._starts, lo, side="right")) - 1
        i1 = int(np.searchsorted(self._starts, hi, side="left")) - 1
        if i0 == i1:
            a, _, va, sl = self._segments[i0]
            return (va if sl == 0.0 else va + sl * (t - a)), sl
        val = der = 0.0
        for a, b, va, sl in self._segments[i0:i1 + 1]:
            s1 = (t - min(b, hi)) / eps
            s2 = (t - max(a, lo)) / eps
            dk = float(kernel_cdf(s2) - kernel_cdf(s1))
            ext = va if sl == 0.0 else va + sl * (t - a)
            val += ext * dk
            if sl != 0.0:
                val -= sl * eps * float(kernel_moment(s2) - kernel_moment(s1))
                der += sl * dk
        near = np.abs(t - self._jump_t) < eps
        if near.any():
            der += float(np.sum(self._jump_v[near] * kernel((t - self._jump_t[near]) / eps))) / eps
        return val, der

    def value(self, t):
        if np.ndim(t) == 0:
            return self._eval(float(t))[0]
        return np.array([self._eval(float(s))[0] for s in np.ravel(t)]).reshape(np.shape(t))

    def derivative(self, t):
        if np.ndim(t) == 0:
            return self._eval(float(t))[1]
        return np.array([self._eval(float(s))[1] for s in np.ravel(t)]).reshape(np.shape(t))

    def quadrature_points(self, T):
        """Points where the mollified schedule stops coinciding with the original."""
        pts = []
        for tau in self.bv.breakpoints():
            pts.extend((tau - self.eps, tau, tau + self.eps))
        return [p for p in sorted(set(pts)) if 0 < p < T]

    def lower_bound(self, T):
        return self.bv.c0

    def upper_bound(self, T):
        return self.bv.sup

    def l1_derivative_norm(self, T):
        return abs_integral(self.derivative, self.value, 0.0, T, self.quadrature_points(T), n=256)

    def to_dict(self):
        return {"kind": self.kind, "eps": self.eps, **self.bv.to_dict()}


@dataclass(frozen=True)
class MollifiedSequenceConfig:
    """Kernel widths ``eps_n = base_width * ratio**n`` (``base_width``
    defaults to T/8), at most ``max_level + 1`` levels, and the target
    c0-weighted sup gap between consecutive levels."""

    base_width: float | None = None
    ratio: float = 0.5
    max_level: int = 12
    tol: float = 1e-5
    extension: str = "constant"

    def __post_init__(self):
        if not 0 < self.ratio < 1:
            raise ArgumentError("width ratio must lie in (0, 1) so widths decrease strictly")
        if self.base_width is not None and not self.base_width > 0:
            raise ArgumentError("base_width must be positive")
        if self.extension != "constant":
            raise ArgumentError("only constant extension is supported")
        if self.max_level < 1:
            raise ArgumentError("max_level must be at least 1")

    def eps(self, n, T):
        base = self.base_width if self.base_width is not None else T / 8
        return base * self.ratio**n


def mollify(schedule, n, cfg=None):
    """The n-th smooth approximation of a BV schedule."""
    cfg = cfg or MollifiedSequenceConfig()
    return MollifiedSchedule(schedule, cfg.eps(n, schedule.T))


def _window_l1(f, centers, eps, T):
    """Integral of |f| over [0, T] when f vanishes outside eps-windows of ``centers``."""
    spans = sorted((max(0.0, c - eps), min(T, c + eps)) for c in centers)
    merged = []
    for a, b in spans:
        if b <= a:
            continue
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    total = 0.0
    for a, b in merged:
        cuts = [a] + [c for c in centers if a < c < b] + [b]
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            val, _ = quad(lambda s: abs(f(s)), lo, hi, epsabs=1e-15, epsrel=1e-11, limit=200)
            total += val
    return total


def mollifier_l1_gap(a, b=None):
    """||a - b||_L1 for a mollified schedule ``a`` and either the BV original
    (``b=None``) or another mollification of the same original."""
    bv = a.bv
    if b is None:
        return _window_l1(lambda s: a.value(s) - bv.value(s), bv.breakpoints(), a.eps, bv.T)
    if b.bv is not bv:
        raise ArgumentError("schedules mollify different originals")
    return _window_l1(lambda s: a.value(s) - b.value(s), bv.breakpoints(),
                      max(a.eps, b.eps), bv.T)


def check_mollification(bv, cfg=None, levels=None, grid_points=10_000):
    """Range, variation and L1-convergence checks on the mollified sequence.

    Returns a list of dicts (one per check) with ``id``, ``passed`` and the
    measured values.
    """
    cfg = cfg or MollifiedSequenceConfig()
    levels = cfg.max_level if levels is None else levels
    grid = np.linspace(0.0, bv.T, grid_points)
    tv = bv.total_variation()
    lo_ok, tv_ok, gaps, tvs, ranges = True, True, [], [], []
    for n in range(levels + 1):
        m = mollify(bv, n, cfg)
        vals = m.value(grid)
        ranges.append((float(vals.min()), float(vals.max())))
        lo_ok &= bool(vals.min() >= bv.c0 - 1e-12 and vals.max() <= bv.sup + 1e-12)
        tvn = m.l1_derivative_norm(bv.T)
        tvs.append(tvn)
        tv_ok &= bool(tvn <= tv + 1e-8)
        gaps.append(mollifier_l1_gap(m))
    decreasing = bool(np.all(np.diff(gaps) < 0)) if len(gaps) > 1 else True
    return [
        {"id": "lem4.1i", "passed": lo_ok, "ranges": ranges, "inf": bv.c0, "sup": bv.sup},
        {"id": "lem4.1ii", "passed": decreasing, "l1_gaps": gaps},
        {"id": "lem4.1iii", "passed": tv_ok, "tv_n": tvs, "tv": tv},
    ]


@dataclass
class BVResult:
    trajectory: object
    diagnostics: list
    converged: bool
    trajectories: list = field(default_factory=list)
    schedules: list = field(default_factory=list)
    max_residual: float = 0.0

    def diagnostics_rows(self):
        header = ["n", "eps", "l1_gap", "tv_n", "sup_gap_to_prev", "cauchy_bound"]
        return header, [[d[k] for k in header] for d in self.diagnostics]


def _c0_sup_gap(a, b, c0):
    return float(np.sqrt(c0**2 * np.sum((a.x - b.x) ** 2, axis=1)
                         + np.sum((a.v - b.v) ** 2, axis=1)).max())


def _scaled(factor, gap):
    return factor * gap if gap > 0 else 0.0


def cauchy_constants(pair, schedule, x0, v0):
    """``(C, growth)`` of the Cauchy estimate between mollified flows.

    With identical data the stability bound reduces to
    ``C_stab/2 * exp(...) * ||lam_n - lam_m||_L1``, so ``C = C_stab/2``; the
    growth factor uses TV(lam) in place of ||lam_n' + lam_m'||_L1 / 2.
    """
    T, c0 = schedule.T, schedule.c0
    m = MollifiedSchedule(schedule, T / 8)
    C = 0.5 * stability_constant_C(PerturbationPair.same_data(pair, m, m, x0, v0, T))
    growth = _exp(schedule.total_variation() / c0 + T * (1 + pair.psi.lipschitz_grad / c0))
    return C, growth


def cauchy_bound(pair, schedule, x0, v0, a, b):
    """Cauchy bound on the c0-weighted sup gap between the flows driven by
    two mollifications ``a`` and ``b`` of ``schedule``."""
    C, growth = cauchy_constants(pair, schedule, x0, v0)
    return _scaled(C * growth, mollifier_l1_gap(a, b))


def bv_solve(pair, schedule, x0, v0, cfg=None, seq_cfg=None, keep=True):
    """Solve the flow for a BV schedule as the limit of mollified flows.

    Levels n = 0, 1, ... are integrated until the c0-weighted sup distance
    between consecutive levels falls below ``seq_cfg.tol``.  Each diagnostics
    row also carries the Cauchy bound

        C * exp(TV/c0 + T (1 + L_psi/c0)) * ||lam_n - lam_{n-1}||_L1

    where C is half the stability constant for identical Cauchy data (see
    :func:`cauchy_bound`).  Raises :class:`NonConvergenceError` (with the
    table) if ``max_level`` is reached first or if the limit trajectory
    leaves the graph of ∂phi by more than ``seq_cfg.tol``.
    """
    cfg = cfg or IntegratorConfig()
    seq_cfg = seq_cfg or MollifiedSequenceConfig()
    T, c0 = schedule.T, schedule.c0
    v0 = np.asarray(v0, dtype=float)
    if not np.any(v0):
        warnings.warn("v0 = 0: the existence result assumes a nonzero initial subgradient",
                      stacklevel=2)
    C, growth = cauchy_constants(pair, schedule, x0, v0)

    diagnostics, trajs, scheds = [], [], []
    prev_traj = prev_sched = None
    converged = False
    for n in range(seq_cfg.max_level + 1):
        sched = mollify(schedule, n, seq_cfg)
        traj = integrate(FlowProblem(pair, sched, x0, v0, T), cfg)
        row = {"n": n, "eps": sched.eps, "l1_gap": mollifier_l1_gap(sched),
               "tv_n": sched.l1_derivative_norm(T),
               "sup_gap_to_prev": math.nan, "cauchy_bound": math.nan}
        if prev_traj is not None:
            row["sup_gap_to_prev"] = _c0_sup_gap(traj, prev_traj, c0)
            row["cauchy_bound"] = _scaled(C * growth, mollifier_l1_gap(sched, prev_sched))
        diagnostics.append(row)
        if keep:
            trajs.append(traj)
            scheds.append(sched)
        prev_traj, prev_sched = traj, sched
        if n > 0 and row["sup_gap_to_prev"] < seq_cfg.tol:
            converged = True
            break
    if not converged:
        raise NonConvergenceError(
            f"consecutive gap still {diagnostics[-1]['sup_gap_to_prev']:.3e} "
            f"after {seq_cfg.max_level} levels", diagnostics)
    res = float(prev_traj.residual.max())
    if res > seq_cfg.tol:
        raise NonConvergenceError(f"limit trajectory residual {res:.3e} exceeds tol", diagnostics)
    return BVResult(trajectory=prev_traj, diagnostics=diagnostics, converged=True,
                    trajectories=trajs, schedules=scheds, max_residual=res)
