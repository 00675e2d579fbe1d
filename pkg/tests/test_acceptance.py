"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import math

import numpy as np
import pytest

from conftest import record
from newtonflow.bv import _c0_sup_gap, bv_solve, cauchy_bound, mollifier_l1_gap, mollify
from newtonflow.certificates import certify_energy, time_derivatives
from newtonflow.config import assemble, list_presets, load_preset
from newtonflow.flow import FlowProblem, integrate
from newtonflow.integrator import IntegratorConfig
from newtonflow.potentials import (
    PHI_CATALOG, BoxPhi, ElasticNetPhi, L1Phi, PotentialPair, QuadraticForm, QuadraticPhi, ZeroPhi,
    inclusion_residual, prox_phi, yosida_grad_phi,
)
from newtonflow.schedules import ConstantSchedule
from newtonflow.stability import PerturbationPair, run_stability_experiment

TIGHT = IntegratorConfig(rtol=1e-9, atol=1e-9)
SEVEN = ("prop2.1a", "prop2.1b", "prop2.2a", "prop2.2b", "prop2.3a", "prop2.3b",
         "cor2.4a", "cor2.4b", "energy2", "prop2.3.pointwise", "energy6")


def experiment(name):
    exp, diags = assemble(load_preset(name))
    assert not diags, diags
    return exp


@pytest.fixture(scope="module")
def preset_runs():
    """(label, problem, trajectory) for every flow computed by every shipped preset."""
    runs = []
    for name in list_presets():
        exp = experiment(name)
        if exp.mode in ("solve", "certify"):
            p = FlowProblem(exp.pair, exp.lam, exp.x0, exp.v0, exp.T)
            runs.append((name, p, integrate(p, exp.integrator)))
        elif exp.mode == "stability":
            pp = PerturbationPair(exp.pair, exp.lam, exp.eta, exp.x0, exp.v0, exp.y0, exp.w0, exp.T)
            for label, p in zip(("lambda", "eta"), pp.problems()):
                runs.append((f"{name}/{label}", p, integrate(p, exp.integrator)))
        else:
            res = bv_solve(exp.pair, exp.bv, exp.x0, exp.v0, exp.integrator, exp.seq)
            for n, (sched, traj) in enumerate(zip(res.schedules, res.trajectories)):
                p = FlowProblem(exp.pair, sched, exp.x0, exp.v0, exp.T)
                runs.append((f"{name}/n={n}", p, traj))
    return runs


@pytest.fixture(scope="module")
def bv_step():
    exp = experiment("bv-step")
    return exp, bv_solve(exp.pair, exp.bv, exp.x0, exp.v0, exp.integrator, exp.seq)


def test_criterion_1_closed_form_flows():
    errs = {}
    for name, rate in (("closed-form-psi", 1.0), ("closed-form-phi", 0.5)):
        exp = experiment(name)
        assert exp.T == 5.0 and exp.integrator.rtol == 1e-9 and exp.integrator.atol == 1e-9
        tr = integrate(FlowProblem(exp.pair, exp.lam, exp.x0, exp.v0, exp.T), exp.integrator)
        errs[name] = float(np.abs(tr.x[:, 0] - np.exp(-rate * tr.t)).max())
    ok = all(e <= 1e-6 for e in errs.values())
    assert record(1, ok, "max-norm errors " + ", ".join(f"{k}={v:.2e}" for k, v in errs.items()))


def test_criterion_2_energy_certificates(preset_runs):
    failures = []
    for label, p, tr in preset_runs:
        rep = certify_energy(tr, p, rel_tol=1e-4)
        assert {c.id for c in rep.checks} == set(SEVEN)
        failures += [f"{label}:{c.id}" for c in rep.failures()]
    p = FlowProblem(PotentialPair(ZeroPhi(1), QuadraticForm(1)), ConstantSchedule(1.0),
                    [1.0], [0.0], 5.0)
    a = certify_energy(integrate(p, TIGHT), p)["prop2.1a"]
    tight = abs(a.measured - a.bound) / a.bound
    ok = not failures and a.bound == 0.5 and tight <= 0.01
    assert record(2, ok, f"{len(preset_runs)} flows certified, failures={failures}, "
                         f"tightness case {a.measured:.6f} vs {a.bound} ({100 * tight:.3f}%)")


def test_criterion_3_monotonicity(preset_runs):
    worst = math.inf
    for _, _, tr in preset_runs:
        xd, vd = time_derivatives(tr)
        inner = np.einsum("ij,ij->i", xd, vd)[1:-1]
        worst = min(worst, float(inner.min()))
    assert record(3, worst >= -1e-6, f"min <x', v'> over all presets = {worst:.3e}")


def test_criterion_4_inclusion_residual(preset_runs):
    worst = 0.0
    for _, _, tr in preset_runs:
        worst = max(worst, float((tr.residual / (1 + np.linalg.norm(tr.x, axis=1))).max()))
    assert record(4, worst <= 1e-6, f"max residual/(1+||x||) = {worst:.3e}")


def test_criterion_5_stability_soundness():
    exp = experiment("stability-pair")
    pp = PerturbationPair(exp.pair, exp.lam, exp.eta, exp.x0, exp.v0, exp.y0, exp.w0, exp.T)
    rep = run_stability_experiment(pp, exp.integrator)
    ok = (abs(rep.measured_sup_theta - 0.1556) <= 1e-3
          and abs(rep.theoretical_bound - math.e) <= 1e-6
          and rep.measured_sup_theta <= rep.theoretical_bound)
    sweep = []
    for eps in (0.2, 0.1, 0.05):
        p = PerturbationPair(exp.pair, exp.lam, ConstantSchedule(1.0 + eps),
                             exp.x0, exp.v0, exp.y0, exp.w0, exp.T)
        sweep.append((eps, run_stability_experiment(p, exp.integrator)))
    sups = [r.measured_sup_theta for _, r in sweep]
    slopes = [r.theoretical_bound / eps for eps, r in sweep]
    ok &= sups[0] > sups[1] > sups[2]
    ok &= all(abs(s / slopes[0] - 1) <= 1e-6 for s in slopes)
    assert record(5, ok, f"sup theta={rep.measured_sup_theta:.6f}, bound={rep.theoretical_bound:.7f}, "
                         f"sweep sups={[round(s, 6) for s in sups]}, bound/eps={slopes[0]:.7f}")


def test_criterion_6_zero_gap():
    worst = 0.0
    for name in ("l1-quadratic", "l1-kink", "closed-form-phi"):
        exp = experiment(name)
        pp = PerturbationPair.same_data(exp.pair, exp.lam, exp.lam, exp.x0, exp.v0, exp.T)
        rep = run_stability_experiment(pp, exp.integrator)
        worst = max(worst, rep.measured_sup_theta / (10 * (exp.integrator.atol + exp.integrator.rtol)))
    assert record(6, worst <= 1.0, f"max sup theta / budget = {worst:.3e}")


def test_criterion_7_mollification():
    exp = experiment("bv-step")
    bv, seq = exp.bv, exp.seq
    grid = np.linspace(0.0, bv.T, 10_000)
    tv = bv.total_variation()
    range_ok, tv_ok, gaps = True, True, []
    for n in range(13):
        m = mollify(bv, n, seq)
        vals = m.value(grid)
        range_ok &= bool(vals.min() >= bv.c0 - 1e-12 and vals.max() <= bv.sup + 1e-12)
        tv_ok &= bool(m.l1_derivative_norm(bv.T) <= tv + 1e-8)
        gaps.append(mollifier_l1_gap(m))
    decreasing = all(a > b for a, b in zip(gaps, gaps[1:]))
    ok = range_ok and tv_ok and decreasing and gaps[10] < 1e-3
    assert record(7, ok, f"range={range_ok}, tv={tv_ok}, gaps decreasing={decreasing}, "
                         f"gap n=10 {gaps[10]:.3e}")


def test_criterion_8_bv_cauchy(bv_step):
    exp, res = bv_step
    c0 = exp.bv.c0
    excess = -math.inf
    for i in range(1, len(res.trajectories)):
        gap = _c0_sup_gap(res.trajectories[i], res.trajectories[i - 1], c0)
        bound = cauchy_bound(exp.pair, exp.bv, exp.x0, exp.v0, res.schedules[i], res.schedules[i - 1])
        excess = max(excess, gap - bound)
    tr = res.trajectory
    half = exp.T / 2
    exact = np.where(tr.t < half, np.exp(-tr.t / 3), math.exp(-half / 3) * np.exp(-(tr.t - half) / 2))
    err = float(np.abs(tr.x[:, 0] - exact).max())
    ok = excess <= 1e-4 and err <= 1e-4
    assert record(8, ok, f"max(gap - bound) over adjacent pairs = {excess:.3e}, "
                         f"oracle error = {err:.2e} after {len(res.trajectories)} levels")


def test_criterion_9_prox_properties():
    rng = np.random.default_rng(2024)
    dim = 3
    catalog = [ZeroPhi(dim), QuadraticPhi(dim, 2.0), L1Phi(dim, [0.5, 1.0, 2.0]),
               BoxPhi(dim, -1.0, 2.0), ElasticNetPhi(dim, 0.7, 1.5)]
    assert len(catalog) == len(PHI_CATALOG)
    worst = {"firm": 0.0, "yosida": 0.0, "resolvent": 0.0}
    for phi in catalog:
        for _ in range(1000):
            y1, y2 = rng.normal(scale=3.0, size=(2, dim))
            mu = float(10 ** rng.uniform(-2, 2))
            p1, p2 = prox_phi(phi, mu, y1), prox_phi(phi, mu, y2)
            d = p1 - p2
            worst["firm"] = max(worst["firm"], float(d @ d - d @ (y1 - y2)))
            g1, g2 = yosida_grad_phi(phi, mu, y1), yosida_grad_phi(phi, mu, y2)
            worst["yosida"] = max(worst["yosida"],
                                  float(np.linalg.norm(g1 - g2) - np.linalg.norm(y1 - y2) / mu))
            worst["resolvent"] = max(worst["resolvent"], inclusion_residual(phi, mu, p1, g1))
    ok = all(v <= 1e-12 for v in worst.values())
    assert record(9, ok, ", ".join(f"{k} max violation {v:.1e}" for k, v in worst.items()))
