"""Lipschitz dependence of the flow on the schedule and on the Cauchy data.

For two flows ``(x, v)`` (schedule ``lam``, data ``x0, v0``) and ``(y, w)``
(schedule ``eta``, data ``y0, w0``) sharing the same potentials, the distance

    theta(t) = sqrt(c0^2 ||x - y||^2 + ||v - w||^2)

is bounded on [0, T] by

    [ (lam(0) + eta(0))/2 ||x0 - y0|| + ||v0 - w0|| + C/2 ||lam - eta||_L1 ]
        * exp( ||lam' + eta'||_L1 / (2 c0) + T (1 + L_psi / c0) ).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ArgumentError, InadmissibleDataError, IntegrationFailure
from .flow import FlowProblem, integrate
from .integrator import IntegratorConfig
from .potentials import _point, grad_psi, inclusion_residual, default_residual_tol
from .schedules import derivative_sum_l1, l1_distance

__all__ = [
    "PerturbationPair", "ThetaSeries", "StabilityBoundReport", "theta", "theta_series",
    "stability_constant_C", "theoretical_bound", "run_stability_experiment",
    "InitialDataReport", "run_initial_data_experiment",
]


@dataclass(frozen=True)
class PerturbationPair:
    """Two Cauchy problems sharing the potentials and the horizon.

    ``c0`` defaults to the smaller of the two schedules' lower bounds.
    """

    pair: object
    lam: object
    eta: object
    x0: np.ndarray
    v0: np.ndarray
    y0: np.ndarray
    w0: np.ndarray
    T: float
    c0: float | None = None

    def __post_init__(self):
        n = self.pair.dim
        for name in ("x0", "v0", "y0", "w0"):
            object.__setattr__(self, name, _point(getattr(self, name), n, name).astype(float))
        c0 = min(self.lam.lower_bound(self.T), self.eta.lower_bound(self.T))
        if self.c0 is None:
            object.__setattr__(self, "c0", c0)
        elif not 0 < self.c0 <= c0:
            raise ArgumentError(f"c0={self.c0!r} must lie in (0, {c0!r}]")
        if not self.c0 > 0:
            raise ArgumentError("schedules must be bounded below by a positive c0")

    @classmethod
    def same_data(cls, pair, lam, eta, x0, v0, T):
        return cls(pair, lam, eta, x0, v0, x0, v0, T)

    def problems(self):
        return (FlowProblem(self.pair, self.lam, self.x0, self.v0, self.T),
                FlowProblem(self.pair, self.eta, self.y0, self.w0, self.T))

    def swapped(self):
        return PerturbationPair(self.pair, self.eta, self.lam, self.y0, self.w0,
                                self.x0, self.v0, self.T, self.c0)


@dataclass(frozen=True)
class ThetaSeries:
    t: np.ndarray
    values: np.ndarray

    @property
    def sup(self):
        return float(self.values.max())


@dataclass(frozen=True)
class StabilityBoundReport:
    constant_C: float
    l1_gap: float
    derivative_term: float
    theoretical_bound: float
    measured_sup_theta: float
    tightness: float
    budget: float
    holds: bool
    theta: ThetaSeries | None = None

    def as_dict(self):
        d = asdict(self)
        d.pop("theta")
        d["check"] = "thm3.1"
        return d

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2)


def theta(state_a, state_b, c0, time_tol=1e-9):
    """c0-weighted distance between two flow states at the same time."""
    if abs(state_a.t - state_b.t) > time_tol * max(1.0, abs(state_a.t)):
        raise ArgumentError(f"states at different times {state_a.t!r} and {state_b.t!r}")
    dx = np.asarray(state_a.x) - np.asarray(state_b.x)
    dv = np.asarray(state_a.v) - np.asarray(state_b.v)
    if dx.shape != dv.shape:
        raise ArgumentError("state dimensions differ")
    return math.sqrt(c0**2 * float(dx @ dx) + float(dv @ dv))


def _on_grid(traj, grid):
    if traj.t.shape == grid.shape and np.array_equal(traj.t, grid):
        return traj.x, traj.v
    x = np.column_stack([np.interp(grid, traj.t, traj.x[:, i]) for i in range(traj.dim)])
    v = np.column_stack([np.interp(grid, traj.t, traj.v[:, i]) for i in range(traj.dim)])
    return x, v


def theta_series(traj_a, traj_b, c0):
    """theta(t) on the union of both output grids (linear interpolation)."""
    grid = np.union1d(traj_a.t, traj_b.t)
    xa, va = _on_grid(traj_a, grid)
    xb, vb = _on_grid(traj_b, grid)
    vals = np.sqrt(c0**2 * np.sum((xa - xb) ** 2, axis=1) + np.sum((va - vb) ** 2, axis=1))
    return ThetaSeries(grid, vals)


def _exp(x):
    # the bound is vacuous (infinite) rather than an error when it overflows
    return math.exp(x) if x < 709.0 else math.inf


def stability_constant_C(pp):
    """Constant C multiplying ||lam - eta||_L1 / 2 in the stability bound."""
    pair, T, c0 = pp.pair, pp.T, pp.c0
    L = pair.psi.lipschitz_grad
    gx, gy = pair.energy_gap(pp.x0), pair.energy_gap(pp.y0)
    nv = float(np.linalg.norm(pp.v0) + np.linalg.norm(pp.w0))
    ng = float(np.linalg.norm(grad_psi(pair.psi, pp.x0)) + np.linalg.norm(grad_psi(pair.psi, pp.y0)))
    return (nv / c0
            + (1 + math.sqrt(2 * T)) / c0 * ng
            + (math.sqrt(2) * T + math.sqrt(T)) * L / c0**1.5 * (math.sqrt(gx) + math.sqrt(gy)))


def _bound_terms(pp):
    C = stability_constant_C(pp)
    gap = l1_distance(pp.lam, pp.eta, pp.T)
    dterm = derivative_sum_l1(pp.lam, pp.eta, pp.T)
    L = pp.pair.psi.lipschitz_grad
    bracket = (0.5 * (pp.lam.value(0.0) + pp.eta.value(0.0)) * float(np.linalg.norm(pp.x0 - pp.y0))
               + float(np.linalg.norm(pp.v0 - pp.w0)) + 0.5 * C * gap)
    if bracket == 0.0:
        return C, gap, dterm, 0.0
    growth = _exp(dterm / (2 * pp.c0) + pp.T * (1 + L / pp.c0))
    return C, gap, dterm, float(bracket * growth)


def theoretical_bound(pp):
    """Upper bound on sup_t theta(t)."""
    return _bound_terms(pp)[3]


def run_stability_experiment(pp, cfg=None):
    """Integrate both flows, measure sup theta and compare with the bound.

    ``holds`` is true when ``sup theta <= bound + 10 (atol + rtol)``.
    """
    cfg = cfg or IntegratorConfig()
    C, gap, dterm, bound = _bound_terms(pp)
    prob_a, prob_b = pp.problems()
    trajs = []
    for label, prob in (("first (lam)", prob_a), ("second (eta)", prob_b)):
        try:
            trajs.append(integrate(prob, cfg))
        except IntegrationFailure as exc:
            raise type(exc)(f"{label} flow: {exc}", partial=exc.partial) from exc
    series = theta_series(trajs[0], trajs[1], pp.c0)
    measured = series.sup
    budget = 10 * (cfg.atol + cfg.rtol)
    tight = measured / bound if bound > 0 else 0.0
    return StabilityBoundReport(
        constant_C=C, l1_gap=gap, derivative_term=dterm, theoretical_bound=bound,
        measured_sup_theta=measured, tightness=tight, budget=budget,
        holds=bool(measured <= bound + budget), theta=series)


@dataclass(frozen=True)
class InitialDataReport:
    data_gaps: tuple
    sup_gaps: tuple
    bounds: tuple
    converging: bool

    def as_dict(self):
        return asdict(self)


def run_initial_data_experiment(problem, perturbed, cfg=None):
    """Flows from a sequence of perturbed Cauchy data versus the base flow.

    ``perturbed`` is an iterable of ``(x0_n, v0_n)``; each pair must lie on
    the graph of ∂phi.  For each n the report holds the initial theta
    distance, the measured sup theta, and the stability bound.
    ``converging`` is true when the sup gaps are non-increasing and the last
    one is smaller than the first.
    """
    cfg = cfg or IntegratorConfig()
    phi = problem.pair.phi
    base = integrate(problem, cfg)
    c0 = problem.c0
    budget = 10 * (cfg.atol + cfg.rtol)
    data_gaps, sup_gaps, bounds = [], [], []
    for xn, vn in perturbed:
        xn = _point(xn, phi.dim, "x0_n").astype(float)
        vn = _point(vn, phi.dim, "v0_n").astype(float)
        res = inclusion_residual(phi, 1.0, xn, vn)
        if res > default_residual_tol(xn):
            raise InadmissibleDataError("perturbed data leaves the graph of the subdifferential", res)
        pp = PerturbationPair(problem.pair, problem.schedule, problem.schedule,
                              problem.x0, problem.v0, xn, vn, problem.T)
        other = integrate(FlowProblem(problem.pair, problem.schedule, xn, vn, problem.T), cfg)
        data_gaps.append(math.sqrt(c0**2 * float((xn - problem.x0) @ (xn - problem.x0))
                                   + float((vn - problem.v0) @ (vn - problem.v0))))
        sup_gaps.append(theta_series(base, other, c0).sup)
        bounds.append(theoretical_bound(pp))
    gaps = np.array(sup_gaps)
    converging = bool(len(gaps) > 1 and np.all(np.diff(gaps) <= budget) and gaps[-1] < gaps[0])
    return InitialDataReport(tuple(data_gaps), tuple(sup_gaps), tuple(bounds), converging)
