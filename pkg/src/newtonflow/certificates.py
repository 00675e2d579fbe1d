"""A-priori estimates checked along a computed trajectory.

Time derivatives are estimated by finite differences on the output grid
(central in the interior, second-order one-sided at the ends) and integrals
by the trapezoid rule.  Every check compares a measured quantity with the
closed-form bound plus a discretization budget ``tol``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ArgumentError
from .potentials import grad_psi

__all__ = ["Check", "CertificateReport", "certify_energy", "energy_bounds", "time_derivatives"]


@dataclass(frozen=True)
class Check:
    id: str
    group: str
    description: str
    measured: float
    bound: float
    passed: bool


@dataclass(frozen=True)
class CertificateReport:
    checks: tuple
    tol: float
    c0: float
    energy_gap: float

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, check_id):
        for c in self.checks:
            if c.id == check_id:
                return c
        raise KeyError(check_id)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def as_dict(self):
        return {"passed": self.passed, "tol": self.tol, "c0": self.c0,
                "energy_gap": self.energy_gap, "checks": [asdict(c) for c in self.checks]}

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2)


def time_derivatives(traj):
    """Finite-difference estimates of x' and v' on the output grid."""
    edge = 2 if len(traj.t) >= 3 else 1
    xd = np.gradient(traj.x, traj.t, axis=0, edge_order=edge)
    vd = np.gradient(traj.v, traj.t, axis=0, edge_order=edge)
    return xd, vd


def energy_bounds(problem):
    """Closed-form right-hand sides of the a-priori estimates.

    Keys: ``xdot_l2sq``, ``x_sup``, ``vdot_l2sq``, ``v_sup``, ``xdot_sup``,
    ``vdot_sup``.
    """
    pair, T, c0 = problem.pair, problem.T, problem.c0
    L = pair.psi.lipschitz_grad
    gap = pair.energy_gap(problem.x0)
    sq = math.sqrt(gap)
    nv0 = float(np.linalg.norm(problem.v0))
    ng0 = float(np.linalg.norm(grad_psi(pair.psi, problem.x0)))
    lip = (math.sqrt(2) * T + math.sqrt(T)) * L
    return {
        "xdot_l2sq": gap / c0,
        "x_sup": float(np.linalg.norm(problem.x0)) + math.sqrt(T / c0) * sq,
        "vdot_l2sq": nv0**2 + 2 * T * ng0**2 + 2 * T**2 * L**2 / c0 * gap,
        "v_sup": nv0 + math.sqrt(2 * T) * ng0 + math.sqrt(2 / c0) * T * L * sq,
        "xdot_sup": nv0 / c0 + (1 + math.sqrt(2 * T)) / c0 * ng0 + lip / c0**1.5 * sq,
        "vdot_sup": nv0 + (1 + math.sqrt(2 * T)) * ng0 + lip / c0**0.5 * sq,
    }


def _trapezoid(y, t):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def certify_energy(traj, problem, rel_tol=1e-4):
    """Check every a-priori estimate on ``traj``.

    The budget is ``tol = rel_tol * (1 + scale)`` where ``scale`` is the
    largest of ``||x||``, ``||v||`` over the samples.

    Check ids: ``prop2.1a``, ``prop2.1b`` (L2 of x', sup of x),
    ``prop2.2a``, ``prop2.2b`` (L2 of v', sup of v), ``prop2.3a``,
    ``prop2.3b`` (sup of x', v'), ``cor2.4a``, ``cor2.4b`` (difference
    quotients), ``energy2`` (<x', v'> >= 0), ``prop2.3.pointwise``
    (||v'|| <= ||v + grad psi(x)||) and ``energy6`` (objective descent).
    """
    if traj.dim != problem.pair.dim:
        raise ArgumentError("trajectory and problem dimensions differ")
    if abs(traj.t[-1] - problem.T) > 1e-9 * max(1.0, problem.T) or traj.t[0] != 0.0:
        raise ArgumentError("trajectory does not cover [0, T] of this problem")
    if np.linalg.norm(traj.x[0] - problem.x0) > 1e-9 * (1 + np.linalg.norm(problem.x0)):
        raise ArgumentError("trajectory does not start at x0 of this problem")

    b = energy_bounds(problem)
    scale = float(max(np.linalg.norm(traj.x, axis=1).max(), np.linalg.norm(traj.v, axis=1).max()))
    tol = rel_tol * (1.0 + scale)
    t = traj.t
    xd, vd = time_derivatives(traj)
    nxd = np.linalg.norm(xd, axis=1)
    nvd = np.linalg.norm(vd, axis=1)
    dt = np.diff(t)
    lip_x = float((np.linalg.norm(np.diff(traj.x, axis=0), axis=1) / dt).max())
    lip_v = float((np.linalg.norm(np.diff(traj.v, axis=0), axis=1) / dt).max())
    gpsi = np.array([grad_psi(problem.pair.psi, x) for x in traj.x])
    force = np.linalg.norm(traj.v + gpsi, axis=1)
    inner = np.einsum("ij,ij->i", xd, vd)[1:-1]
    descent = np.diff(traj.objective)

    rows = [
        ("prop2.1a", "a", "int ||x'||^2 <= (E(x0) - inf E)/c0",
         _trapezoid(nxd**2, t), b["xdot_l2sq"]),
        ("prop2.1b", "b", "sup ||x|| <= ||x0|| + sqrt(T/c0) (E(x0) - inf E)^1/2",
         float(np.linalg.norm(traj.x, axis=1).max()), b["x_sup"]),
        ("prop2.2a", "c", "int ||v'||^2 bound", _trapezoid(nvd**2, t), b["vdot_l2sq"]),
        ("prop2.2b", "c", "sup ||v|| bound", float(np.linalg.norm(traj.v, axis=1).max()),
         b["v_sup"]),
        ("prop2.3a", "d", "sup ||x'|| bound", float(nxd.max()), b["xdot_sup"]),
        ("prop2.3b", "d", "sup ||v'|| bound", float(nvd.max()), b["vdot_sup"]),
        ("cor2.4a", "d", "Lipschitz quotient of x", lip_x, b["xdot_sup"]),
        ("cor2.4b", "d", "Lipschitz quotient of v", lip_v, b["vdot_sup"]),
        ("energy2", "e", "min <x', v'> >= 0 (reported negated)",
         float(-inner.min()) if inner.size else 0.0, 0.0),
        ("prop2.3.pointwise", "f", "max ||v'|| - ||v + grad psi(x)|| <= 0",
         float((nvd - force).max()), 0.0),
        ("energy6", "g", "max increase of (phi+psi)(x(t)) <= 0",
         float(descent.max()) if descent.size else 0.0, 0.0),
    ]
    checks = tuple(Check(cid, grp, desc, m, bd, bool(m <= bd + tol))
                   for cid, grp, desc, m, bd in rows)
    return CertificateReport(checks=checks, tol=tol, c0=problem.c0,
                             energy_gap=problem.pair.energy_gap(problem.x0))
