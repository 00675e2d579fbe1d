"""The regularized Newton flow and its integration through the z-variable.

The inclusion ``lambda x' + v' + v + grad psi(x) = 0, v in ∂phi(x)`` is
integrated as the explicit ODE

    z' = -(mu - mu') grad phi_mu(z) - mu grad psi(prox_{mu phi}(z)),
    z(0) = x0 + mu(0) v0,       mu = 1/lambda,

and ``(x, v)`` is recovered as ``x = prox_{mu phi}(z)``,
``v = grad phi_mu(z) = (z - x)/mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, InadmissibleDataError, IntegrationFailure
from .integrator import IntegratorConfig, IntegratorStats, dopri45
from .potentials import (
    PotentialPair, _point, default_residual_tol, inclusion_residual, prox_phi,
    yosida_grad_phi,
)
from .schedules import mu_of

__all__ = [
    "FlowProblem", "FlowState", "Trajectory", "IntegratorConfig", "z_rhs",
    "integrate", "output_grid",
]


@dataclass(frozen=True)
class FlowProblem:
    """Cauchy problem on [0, T].  Construction rejects a schedule whose lower
    bound on [0, T] is not positive and initial data off the graph of ∂phi."""

    pair: PotentialPair
    schedule: object
    x0: np.ndarray
    v0: np.ndarray
    T: float
    residual_tol: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ArgumentError(f"horizon T must be positive, got {self.T!r}")
        x0 = _point(self.x0, self.pair.dim, "x0").astype(float).copy()
        v0 = _point(self.v0, self.pair.dim, "v0").astype(float).copy()
        x0.setflags(write=False)
        v0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "v0", v0)
        object.__setattr__(self, "T", float(self.T))
        c0 = self.schedule.lower_bound(self.T)
        if not c0 > 0:
            raise ArgumentError(f"schedule lower bound c0 on [0, T] must be positive, got {c0!r}")
        tol = self.residual_tol if self.residual_tol is not None else default_residual_tol(x0)
        res = inclusion_residual(self.pair.phi, 1.0, x0, v0)
        if res > tol:
            raise InadmissibleDataError("v0 is not a subgradient of phi at x0", res)

    @property
    def c0(self):
        return self.schedule.lower_bound(self.T)

    @property
    def z0(self):
        mu0 = 1.0 / self.schedule.value(0.0)
        return self.x0 + mu0 * self.v0


@dataclass(frozen=True)
class FlowState:
    t: float
    z: np.ndarray
    x: np.ndarray
    v: np.ndarray
    mu: float


@dataclass(frozen=True)
class Trajectory:
    """Samples of the flow on a uniform output grid.

    Arrays are read-only.  ``x``, ``v`` and ``z`` have shape ``(m, n)``;
    ``residual`` is the inclusion residual (prox index 1) of each sample.
    """

    t: np.ndarray
    z: np.ndarray
    x: np.ndarray
    v: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    objective: np.ndarray
    residual: np.ndarray
    stats: IntegratorStats = field(default_factory=IntegratorStats)

    def __post_init__(self):
        for name in ("t", "z", "x", "v", "lam", "mu", "objective", "residual"):
            getattr(self, name).setflags(write=False)

    def __len__(self):
        return len(self.t)

    def state(self, i):
        return FlowState(float(self.t[i]), self.z[i], self.x[i], self.v[i], float(self.mu[i]))

    @property
    def dim(self):
        return self.x.shape[1]

    def csv_rows(self):
        """Header and rows of the CSV export (17 significant digits)."""
        n = self.dim
        header = (["t", "lambda", "mu", "objective", "residual"]
                  + [f"x_{i}" for i in range(n)] + [f"v_{i}" for i in range(n)]
                  + [f"z_{i}" for i in range(n)])
        cols = np.column_stack([self.t, self.lam, self.mu, self.objective, self.residual,
                                self.x, self.v, self.z])
        rows = [[f"{val:.17g}" for val in row] for row in cols]
        return header, rows


def output_grid(T, dt):
    """Uniform grid on [0, T] with spacing at most ``dt``."""
    n = max(1, math.ceil(T / dt - 1e-9))
    return np.linspace(0.0, T, n + 1)


def _make_rhs(problem):
    phi, psi, sched = problem.pair.phi, problem.pair.psi, problem.schedule

    def rhs(t, z, left=False):
        lam = sched.value(t)
        dlam = sched.left_derivative(t) if left else sched.derivative(t)
        mu = 1.0 / lam
        mu_dot = -dlam / (lam * lam)
        x = phi._prox(mu, z)
        return -(mu - mu_dot) * ((z - x) / mu) - mu * psi._grad(x)

    return rhs


def z_rhs(problem, t, z):
    """Right-hand side of the z-equation at time ``t``."""
    mu, mu_dot = mu_of(problem.schedule, t, problem.T)
    z = _point(z, problem.pair.dim, "z")
    x = prox_phi(problem.pair.phi, mu, z)
    return (-(mu - mu_dot) * yosida_grad_phi(problem.pair.phi, mu, z)
            - mu * problem.pair.psi._grad(x))


def _trajectory(problem, t, zs, stats):
    phi = problem.pair.phi
    lam = np.asarray(problem.schedule.value(t), dtype=float) * np.ones_like(t)
    mu = 1.0 / lam
    xs = np.empty_like(zs)
    vs = np.empty_like(zs)
    obj = np.empty(len(t))
    res = np.empty(len(t))
    for i in range(len(t)):
        xs[i] = phi._prox(mu[i], zs[i])
        vs[i] = (zs[i] - xs[i]) / mu[i]
        obj[i] = problem.pair.objective(xs[i])
        res[i] = inclusion_residual(phi, 1.0, xs[i], vs[i])
    return Trajectory(t=np.array(t, dtype=float), z=np.array(zs), x=xs, v=vs, lam=lam, mu=mu,
                      objective=obj, residual=res, stats=stats)


def integrate(problem, cfg=None):
    """Integrate ``problem`` on [0, T] and return the sampled :class:`Trajectory`.

    Steps land on every output time and on every kink of the schedule.  On
    failure the raised :class:`IntegrationFailure` carries the partial
    trajectory in ``.partial``.
    """
    cfg = cfg or IntegratorConfig()
    t_out = output_grid(problem.T, cfg.dense_output_dt)
    try:
        zs, stats = dopri45(_make_rhs(problem), t_out, problem.z0, cfg,
                            kinks=problem.schedule.breakpoints(problem.T))
    except IntegrationFailure as exc:
        if exc.partial is not None:
            tp, zp = exc.partial
            exc.partial = _trajectory(problem, tp, zp, IntegratorStats())
        raise
    return _trajectory(problem, t_out, zs, stats)
