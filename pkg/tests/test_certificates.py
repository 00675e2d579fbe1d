import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from newtonflow.certificates import certify_energy, energy_bounds, time_derivatives
from newtonflow.errors import ArgumentError
from newtonflow.flow import FlowProblem, integrate
from newtonflow.integrator import IntegratorConfig
from newtonflow.potentials import (
    L1Phi, PotentialPair, QuadraticForm, QuadraticPhi, ZeroPhi, ZeroPsi,
)
from newtonflow.schedules import ConstantSchedule, ExpDecaySchedule, RationalSchedule

CFG = IntegratorConfig(rtol=1e-9, atol=1e-9)
ALL_IDS = {"prop2.1a", "prop2.1b", "prop2.2a", "prop2.2b", "prop2.3a", "prop2.3b",
           "cor2.4a", "cor2.4b", "energy2", "prop2.3.pointwise", "energy6"}


def l1_pair(lower=None):
    return PotentialPair(L1Phi(1), QuadraticForm.centered(1, 1.0, 2.0), lower)


def run(problem):
    return certify_energy(integrate(problem, CFG), problem)


def test_decay_example_first_estimate():
    p = FlowProblem(PotentialPair(ZeroPhi(1), QuadraticForm(1)), ConstantSchedule(1.0),
                    [1.0], [0.0], 3.0)
    rep = run(p)
    a = rep["prop2.1a"]
    assert a.bound == pytest.approx(0.5)
    assert a.measured == pytest.approx((1 - math.exp(-6)) / 2, rel=1e-4)
    assert a.passed and rep.passed
    assert {c.id for c in rep.checks} == ALL_IDS
    assert {c.group for c in rep.checks} == set("abcdefg")


def test_stationary_trajectory_all_zero():
    # x0 = 1 minimizes |x| + (x-2)^2/2 and v0 = 1 = -grad psi(1)
    p = FlowProblem(l1_pair(1.5), RationalSchedule(0.1), [1.0], [1.0], 3.0)
    rep = run(p)
    assert rep.passed
    for cid in ("prop2.1a", "prop2.2a", "prop2.3a", "prop2.3b", "cor2.4a", "cor2.4b"):
        assert abs(rep[cid].measured) < 1e-10


def test_l1_constant_schedule_all_pass():
    p = FlowProblem(l1_pair(), ConstantSchedule(0.5), [1.0], [1.0], 4.0)
    assert run(p).passed


def test_kink_crossing_all_pass():
    p = FlowProblem(l1_pair(), ExpDecaySchedule(1.0, 1.0, 0.2), [-1.0], [-1.0], 5.0)
    rep = run(p)
    assert rep.passed, [c.id for c in rep.failures()]


def test_energy_bounds_formulas():
    # phi = |x|, psi = (x-2)^2/2, x0 = 3, v0 = 1, c0 = 0.5, T = 2, inf bound 0
    p = FlowProblem(l1_pair(), ConstantSchedule(0.5), [3.0], [1.0], 2.0)
    b = energy_bounds(p)
    gap, c0, T, L, nv, ng = 3.5, 0.5, 2.0, 1.0, 1.0, 1.0
    assert b["xdot_l2sq"] == pytest.approx(gap / c0)
    assert b["x_sup"] == pytest.approx(3 + math.sqrt(T / c0) * math.sqrt(gap))
    assert b["vdot_l2sq"] == pytest.approx(nv**2 + 2 * T * ng**2 + 2 * T**2 * L**2 / c0 * gap)
    assert b["v_sup"] == pytest.approx(nv + math.sqrt(2 * T) * ng + math.sqrt(2 / c0) * T * L * math.sqrt(gap))
    lip = (math.sqrt(2) * T + math.sqrt(T)) * L
    assert b["xdot_sup"] == pytest.approx(nv / c0 + (1 + math.sqrt(2 * T)) / c0 * ng
                                          + lip / c0**1.5 * math.sqrt(gap))
    assert b["vdot_sup"] == pytest.approx(nv + (1 + math.sqrt(2 * T)) * ng + lip / c0**0.5 * math.sqrt(gap))


def test_wrong_lower_bound_makes_named_check_fail():
    # a (too large) lower bound shrinks the first estimate below what the flow dissipates
    pair = PotentialPair(ZeroPhi(1), QuadraticForm(1), 0.49)
    p = FlowProblem(pair, ConstantSchedule(1.0), [1.0], [0.0], 3.0)
    rep = run(p)
    assert not rep.passed
    assert "prop2.1a" in [c.id for c in rep.failures()]


def test_mismatch_rejected():
    p = FlowProblem(l1_pair(), ConstantSchedule(0.5), [1.0], [1.0], 2.0)
    tr = integrate(p)
    with pytest.raises(ArgumentError):
        certify_energy(tr, FlowProblem(l1_pair(), ConstantSchedule(0.5), [1.0], [1.0], 3.0))
    with pytest.raises(ArgumentError):
        certify_energy(tr, FlowProblem(l1_pair(), ConstantSchedule(0.5), [0.0], [0.5], 2.0))
    two = PotentialPair(L1Phi(2), ZeroPsi(2))
    with pytest.raises(ArgumentError):
        certify_energy(tr, FlowProblem(two, ConstantSchedule(0.5), [1.0, 1.0], [1.0, 1.0], 2.0))


def test_report_serialization():
    p = FlowProblem(PotentialPair(QuadraticPhi(1), ZeroPsi(1)), ConstantSchedule(1.0),
                    [1.0], [1.0], 1.0)
    rep = run(p)
    d = json.loads(rep.to_json())
    assert d["passed"] is True
    assert [c["id"] for c in d["checks"]] == [c.id for c in rep.checks]
    with pytest.raises(KeyError):
        rep["thm9.9"]


def test_time_derivatives_exact_for_quadratic_in_t():
    class Fake:
        t = np.linspace(0.0, 1.0, 11)
        x = (t**2)[:, None]
        v = (3 * t)[:, None]

    xd, vd = time_derivatives(Fake)
    assert np.allclose(xd[:, 0], 2 * Fake.t)
    assert np.allclose(vd[:, 0], 3.0)


@settings(max_examples=8, deadline=None)
@given(x0=st.floats(-3.0, 3.0), c=st.floats(0.2, 2.0))
def test_certificates_pass_on_random_l1_data(x0, c):
    v0 = float(np.sign(x0)) if x0 != 0 else 0.0
    p = FlowProblem(l1_pair(), ConstantSchedule(c), [x0], [v0], 2.0)
    rep = certify_energy(integrate(p), p)
    assert rep.passed, [(f.id, f.measured, f.bound) for f in rep.failures()]
