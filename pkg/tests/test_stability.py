import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from newtonflow.errors import ArgumentError, InadmissibleDataError, IntegrationFailure
from newtonflow.flow import FlowProblem, FlowState, integrate
from newtonflow.integrator import IntegratorConfig
from newtonflow.potentials import (
    BoxPhi, L1Phi, PotentialPair, QuadraticForm, QuadraticPhi, ZeroPsi,
)
from newtonflow.schedules import ConstantSchedule, ExpDecaySchedule, RationalSchedule
from newtonflow.stability import (
    PerturbationPair, run_initial_data_experiment, run_stability_experiment,
    stability_constant_C, theoretical_bound, theta, theta_series,
)

CFG = IntegratorConfig(rtol=1e-9, atol=1e-9)
# sqrt(2) |exp(-1/2) - exp(-1/3)|
THETA_AT_1 = math.sqrt(2) * abs(math.exp(-0.5) - math.exp(-1 / 3))
# mpmath evaluation of the constant for phi=|x|, psi=(x-2)^2/2, x0=y0=1, v0=w0=1, c0=0.5, T=2
C_L1 = 45.3938769133981371783674088965


def quad_pair():
    return PotentialPair(QuadraticPhi(1), ZeroPsi(1))


def l1_pair(lower=None):
    return PotentialPair(L1Phi(1), QuadraticForm.centered(1, 1.0, 2.0), lower)


def base_pp(eta=2.0, T=1.0):
    return PerturbationPair.same_data(quad_pair(), ConstantSchedule(1.0), ConstantSchedule(eta),
                                      [1.0], [1.0], T)


def state(t, x, v):
    return FlowState(t, np.array(x) + np.array(v), np.array(x), np.array(v), 1.0)


# -- theta ----------------------------------------------------------------------

def test_theta_examples():
    a = state(0.5, [1.0, 2.0], [0.0, 1.0])
    assert theta(a, a, 1.0) == 0.0
    b = state(0.5, [4.0, 2.0], [0.0, 5.0])
    assert theta(a, b, 1.0) == pytest.approx(5.0)


def test_theta_closed_form_flows_at_one():
    pp = base_pp()
    ta, tb = (integrate(p, CFG) for p in pp.problems())
    assert theta(ta.state(-1), tb.state(-1), 1.0) == pytest.approx(THETA_AT_1, abs=1e-7)


def test_theta_time_mismatch():
    with pytest.raises(ArgumentError):
        theta(state(0.0, [1.0], [1.0]), state(0.1, [1.0], [1.0]), 1.0)


def test_theta_series_initial_value():
    pp = PerturbationPair(quad_pair(), ConstantSchedule(1.0), ConstantSchedule(1.0),
                          [1.0], [1.0], [2.0], [2.0], 1.0)
    ta, tb = (integrate(p, CFG) for p in pp.problems())
    series = theta_series(ta, tb, pp.c0)
    assert series.values[0] == pytest.approx(math.sqrt(1 + 1))
    assert np.all(series.values >= 0)


# -- constant C and the bound -----------------------------------------------------

def test_constant_examples():
    assert stability_constant_C(base_pp()) == pytest.approx(2.0)
    zero = PerturbationPair.same_data(quad_pair(), ConstantSchedule(1.0), ConstantSchedule(2.0),
                                      [0.0], [0.0], 1.0)
    assert stability_constant_C(zero) == 0.0


def test_constant_l1_example():
    pp = PerturbationPair.same_data(l1_pair(), ConstantSchedule(0.5), ConstantSchedule(1.0),
                                    [1.0], [1.0], 2.0)
    assert pp.c0 == 0.5
    assert stability_constant_C(pp) == pytest.approx(C_L1, rel=1e-12)
    tight = PerturbationPair.same_data(l1_pair(1.5), ConstantSchedule(0.5), ConstantSchedule(1.0),
                                       [1.0], [1.0], 2.0)
    assert stability_constant_C(tight) == pytest.approx(16.0)


def test_bound_examples():
    same = PerturbationPair.same_data(quad_pair(), ConstantSchedule(1.0), ConstantSchedule(1.0),
                                      [1.0], [1.0], 1.0)
    assert theoretical_bound(same) == 0.0
    assert theoretical_bound(base_pp(2.0)) == pytest.approx(math.e, rel=1e-14)
    assert theoretical_bound(base_pp(1.5)) == pytest.approx(math.e / 2, rel=1e-14)


def test_explicit_c0_checked():
    with pytest.raises(ArgumentError):
        PerturbationPair(quad_pair(), ConstantSchedule(1.0), ConstantSchedule(2.0),
                         [1.0], [1.0], [1.0], [1.0], 1.0, c0=1.5)


def test_reduction_without_psi():
    # with psi = 0 every psi term of the constant and the exponent drops out
    lam, eta = ExpDecaySchedule(1.0, 1.0, 0.5), RationalSchedule(0.7)
    T = 2.0
    pp = PerturbationPair(quad_pair(), lam, eta, [1.0], [1.0], [0.5], [0.5], T)
    c0 = pp.c0
    C = (1.0 + 0.5) / c0
    from scipy.integrate import quad
    gap = quad(lambda t: abs(lam.value(t) - eta.value(t)), 0, T, epsabs=1e-13)[0]
    dsum = quad(lambda t: abs(lam.derivative(t) + eta.derivative(t)), 0, T, epsabs=1e-13)[0]
    expected = ((lam.value(0.0) + eta.value(0.0)) / 2 * 0.5 + 0.5 + C / 2 * gap) \
        * math.exp(dsum / (2 * c0) + T)
    assert stability_constant_C(pp) == pytest.approx(C)
    assert theoretical_bound(pp) == pytest.approx(expected, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(e1=st.floats(0.01, 2.0), e2=st.floats(0.01, 2.0))
def test_bound_monotone_in_l1_gap(e1, e2):
    lo, hi = sorted((e1, e2))
    b_lo = theoretical_bound(base_pp(1.0 + lo))
    b_hi = theoretical_bound(base_pp(1.0 + hi))
    assert b_lo <= b_hi * (1 + 1e-14)


# -- experiments --------------------------------------------------------------------

def test_identical_flows_zero_gap():
    pp = PerturbationPair.same_data(l1_pair(), RationalSchedule(0.1), RationalSchedule(0.1),
                                    [3.0], [1.0], 3.0)
    rep = run_stability_experiment(pp, CFG)
    assert rep.measured_sup_theta <= 10 * (CFG.atol + CFG.rtol)
    assert rep.theoretical_bound == 0.0 and rep.holds


def test_reference_pair():
    rep = run_stability_experiment(base_pp(), CFG)
    assert rep.constant_C == pytest.approx(2.0)
    assert rep.l1_gap == pytest.approx(1.0)
    assert rep.derivative_term == 0.0
    assert rep.theoretical_bound == pytest.approx(math.e, abs=1e-6)
    assert rep.measured_sup_theta == pytest.approx(THETA_AT_1, abs=1e-6)
    assert rep.tightness == pytest.approx(0.057, abs=1e-3)
    assert rep.holds
    assert rep.as_dict()["check"] == "thm3.1"


def test_epsilon_sweep():
    reps = [run_stability_experiment(base_pp(1.0 + e), CFG) for e in (0.2, 0.1, 0.05)]
    sups = [r.measured_sup_theta for r in reps]
    assert sups[0] > sups[1] > sups[2]
    for e, r in zip((0.2, 0.1, 0.05), reps):
        assert r.theoretical_bound / e == pytest.approx(math.e, rel=1e-6)


def test_swap_symmetry():
    pp = PerturbationPair(l1_pair(), ExpDecaySchedule(1.0, 1.0, 0.3), RationalSchedule(0.2),
                          [3.0], [1.0], [-1.0], [-1.0], 2.0)
    a = run_stability_experiment(pp, CFG)
    b = run_stability_experiment(pp.swapped(), CFG)
    assert a.theoretical_bound == pytest.approx(b.theoretical_bound, rel=1e-12)
    assert a.measured_sup_theta == pytest.approx(b.measured_sup_theta, rel=1e-12)
    assert a.holds and b.holds


@settings(max_examples=6, deadline=None)
@given(c1=st.floats(0.3, 2.0), c2=st.floats(0.3, 2.0), x0=st.floats(-2.0, 3.0), y0=st.floats(-2.0, 3.0))
def test_bound_sound_on_random_l1_pairs(c1, c2, x0, y0):
    sgn = lambda x: float(np.sign(x))
    pp = PerturbationPair(l1_pair(), ConstantSchedule(c1), ExpDecaySchedule(1.0, 0.5, c2),
                          [x0], [sgn(x0)], [y0], [sgn(y0)], 1.5)
    rep = run_stability_experiment(pp, CFG)
    assert rep.holds


def test_failure_names_flow():
    pp = PerturbationPair.same_data(PotentialPair(QuadraticPhi(1), QuadraticForm(1, Q=1e6)),
                                    ConstantSchedule(1.0), ConstantSchedule(2.0), [1.0], [1.0], 1.0)
    with pytest.raises(IntegrationFailure, match="first"):
        run_stability_experiment(pp, IntegratorConfig(max_steps=100))


def test_initial_data_linear_flow():
    p = FlowProblem(quad_pair(), ConstantSchedule(1.0), [1.0], [1.0], 2.0)
    data = [(1 + 1 / n, 1 + 1 / n) for n in (1, 2, 4, 8)]
    rep = run_initial_data_experiment(p, data, CFG)
    for n, g in zip((1, 2, 4, 8), rep.sup_gaps):
        assert g == pytest.approx(math.sqrt(2) / n, abs=1e-7)
    assert rep.converging
    assert all(g <= b for g, b in zip(rep.sup_gaps, rep.bounds))


def test_initial_data_unperturbed():
    p = FlowProblem(quad_pair(), ConstantSchedule(1.0), [1.0], [1.0], 1.0)
    rep = run_initial_data_experiment(p, [(1.0, 1.0)], CFG)
    assert rep.sup_gaps[0] == 0.0 and rep.data_gaps[0] == 0.0


def test_initial_data_box_normal_cone_blows_up():
    pair = PotentialPair(BoxPhi(1, 0.0, 1.0), QuadraticForm.centered(1, 1.0, 0.5))
    p = FlowProblem(pair, ConstantSchedule(1.0), [1.0], [0.0], 1.0)
    rep = run_initial_data_experiment(p, [(1.0, float(n)) for n in (1, 2, 4, 8)], CFG)
    assert not rep.converging
    assert rep.sup_gaps[-1] > rep.sup_gaps[0]


def test_initial_data_inadmissible_rejected():
    p = FlowProblem(PotentialPair(L1Phi(1), ZeroPsi(1)), ConstantSchedule(1.0), [1.0], [1.0], 1.0)
    with pytest.raises(InadmissibleDataError) as info:
        run_initial_data_experiment(p, [(1.0, 3.0)], CFG)
    assert info.value.residual == pytest.approx(2.0)
