"""Dormand-Prince 5(4) with PI step-size control.

Steps are clipped so that every requested output time and every declared
kink of the right-hand side is hit exactly; no step straddles a kink and no
interpolation is needed for output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, IntegrationFailure, StiffnessError

__all__ = ["IntegratorConfig", "IntegratorStats", "dopri45"]

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B = np.array(A[6] + [0.0])
A = [np.array(row) for row in A]
# difference between the 5th and embedded 4th order weights
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

SAFETY = 0.9
BETA = 0.04
ALPHA = 0.2 - 0.75 * BETA
FAC_MIN, FAC_MAX = 0.2, 5.0


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and step bounds.

    The local error estimate of every accepted step satisfies
    ``||err|| <= atol + rtol * max(||y_n||, ||y_{n+1}||)``.  Output is produced
    on a uniform grid whose spacing is at most ``dense_output_dt``.
    """

    rtol: float = 1e-9
    atol: float = 1e-10
    h0: float = 1e-3
    hmax: float = 0.1
    max_steps: int = 500_000
    dense_output_dt: float = 2e-3

    def __post_init__(self):
        for name in ("rtol", "atol", "h0", "hmax", "dense_output_dt"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ArgumentError(f"integrator {name} must be positive, got {val!r}")
        if self.h0 > self.hmax:
            raise ArgumentError("integrator h0 must not exceed hmax")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise ArgumentError("integrator max_steps must be a positive integer")


@dataclass
class IntegratorStats:
    steps: int = 0
    rejections: int = 0
    rhs_evals: int = 0
    max_error_estimate: float = 0.0

    def as_dict(self):
        return {"steps": self.steps, "rejections": self.rejections,
                "rhs_evals": self.rhs_evals, "max_error_estimate": self.max_error_estimate}


def dopri45(f, t_out, y0, cfg, kinks=()):
    """Integrate ``y' = f(t, y, left)`` and return ``(ys, stats)`` at ``t_out``.

    ``f`` receives ``left=True`` for stages evaluated at the right end of a
    step that terminates on a kink, so one-sided coefficients are used
    consistently inside each step.

    Raises :class:`IntegrationFailure` (with the outputs computed so far as
    ``partial = (t, ys)``) when ``cfg.max_steps`` is exceeded, and
    :class:`StiffnessError` on step-size underflow.
    """
    t_out = np.asarray(t_out, dtype=float)
    kinks = np.asarray([k for k in np.atleast_1d(kinks) if t_out[0] < k < t_out[-1]], dtype=float)
    stops = np.union1d(t_out, kinks)
    is_kink = np.isin(stops, kinks)
    is_out = np.isin(stops, t_out)

    y = np.array(y0, dtype=float)
    t = float(stops[0])
    ys = [y.copy()]
    stats = IntegratorStats()
    h = min(cfg.h0, cfg.hmax)
    err_old = 1e-4
    k1 = f(t, y, False)
    stats.rhs_evals += 1
    K = np.empty((7, y.size))

    def partial():
        return t_out[:len(ys)], np.array(ys)

    for j in range(1, len(stops)):
        stop = stops[j]
        at_kink = bool(is_kink[j])
        while t < stop:
            if stats.steps + stats.rejections >= cfg.max_steps:
                raise IntegrationFailure(
                    f"max_steps={cfg.max_steps} exceeded at t={t:.6g}", partial=partial())
            h_try = min(h, cfg.hmax)
            remaining = stop - t
            landing = h_try >= remaining * (1 - 1e-10)
            if landing:
                h_try = remaining
            if h_try <= 16 * np.finfo(float).eps * max(1.0, abs(t)):
                raise StiffnessError(f"step size underflow at t={t:.6g}", partial=partial())

            left = landing and at_kink
            K[0] = k1
            for s in range(1, 7):
                ys_stage = y + h_try * (A[s] @ K[:s])
                K[s] = f(t + C[s] * h_try if s < 5 else (stop if landing else t + h_try),
                         ys_stage, left and C[s] == 1.0)
            stats.rhs_evals += 6
            with np.errstate(invalid="ignore", over="ignore"):
                y_new = y + h_try * (B[:6] @ K[:6])
                err_vec = h_try * (E @ K)
                scale = cfg.atol + cfg.rtol * max(np.linalg.norm(y), np.linalg.norm(y_new))
                err = float(np.linalg.norm(err_vec)) / scale
            if not np.isfinite(err):
                # non-finite stage values: reject and shrink as hard as allowed
                err = np.inf

            if err <= 1.0:
                stats.steps += 1
                stats.max_error_estimate = max(stats.max_error_estimate, err * scale)
                fac = SAFETY * max(err, 1e-10) ** -ALPHA * err_old ** BETA
                h_new = h_try * min(FAC_MAX, max(FAC_MIN, fac))
                err_old = max(err, 1e-4)
                t = float(stop) if landing else t + h_try
                y = y_new
                if left:
                    k1 = f(t, y, False)
                    stats.rhs_evals += 1
                else:
                    k1 = K[6].copy()
                h = max(h_new, h) if landing else h_new
            else:
                stats.rejections += 1
                fac = SAFETY * err ** -ALPHA
                h = h_try * min(1.0, max(FAC_MIN, fac))
        if is_out[j]:
            ys.append(y.copy())
    return np.array(ys), stats
