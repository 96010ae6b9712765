import math
from fractions import Fraction

import numpy as np
import pytest

from degenlab import coefficients as co
from degenlab.bernstein import (BernsteinConfig, Cutoff, DeltaSweepError, auxiliary_v,
                                check_domination, defect_report, delta_sweep, jet_cauchy_schwarz,
                                jet_fuzz, jet_ut_bound, random_jets, select_beta)
from degenlab.core import Grid, Jet, sample_solution

from conftest import rng


def test_select_beta():
    assert select_beta(co.PLAPLACE, 2.5) == 0.5
    assert select_beta(co.PLAPLACE, 4.0) == 0.0
    assert select_beta(co.FULLY_NONLINEAR, 0.25) == 0.75
    assert select_beta(co.GENERAL_QUASILINEAR, 2.0) == 0.0
    with pytest.raises(ValueError):
        select_beta(co.PLAPLACE, 2.0)


def test_domination_examples():
    r = check_domination(co.PLAPLACE, 3.0, 0.0)
    assert r.holds and r.margin == 0.0 and r.identity_holds and r.rhs == Fraction(1, 2)
    r = check_domination(co.PLAPLACE, 4.0, 0.0)
    assert r.holds and r.margin == 0.5
    r = check_domination(co.GENERAL_QUASILINEAR, 0.5, 0.0)
    assert not r.holds and r.margin == -0.25
    assert check_domination(co.GENERAL_QUASILINEAR, 0.5, 0.5).holds
    r = check_domination(co.FULLY_NONLINEAR, 0.5, 0.5)
    assert r.holds and r.identity_holds


@pytest.mark.parametrize("family,values", [(co.PLAPLACE, [2.1, 2.5, 3.0, 5.0, 10.0]),
                                           (co.FULLY_NONLINEAR, [0.1, 0.5, 1.0, 3.0]),
                                           (co.GENERAL_QUASILINEAR, [0.1, 0.5, 1.0, 3.0])])
def test_domination_with_selected_beta(family, values):
    for v in values:
        r = check_domination(family, v, select_beta(family, v))
        assert r.holds and r.identity_holds


def test_cauchy_schwarz_cases():
    j = Jet(np.zeros(2), np.eye(2))
    assert jet_cauchy_schwarz(j, 0.0, [1.0, 0.0]).lhs == 0.0
    w = np.array([0.6, 0.8])
    j = Jet(2 * w, np.outer(w, w))
    c = jet_cauchy_schwarz(j, 0.0, 3 * w)
    assert c.holds and math.isclose(c.lhs, c.rhs, rel_tol=1e-14)


def test_ut_bound_trace_and_tau_consistency():
    P = co.CoefficientParams.plaplace(2.0, 0.1)
    M = np.array([[1.0, 0.5], [0.5, -3.0]])
    c = jet_ut_bound(Jet(np.array([0.2, 0.1]), M), P)
    assert c.lhs == 2.0 and c.holds
    assert math.isclose(c.rhs, math.sqrt(2) * np.linalg.norm(M))
    with pytest.raises(ValueError):
        jet_ut_bound(Jet(np.array([0.2, 0.1]), M, tau=0.0), P)


def test_random_jets_adversarial_tail():
    q, M, xi, eps = random_jets(rng(0), 50, 2, adversarial=10)
    assert q.shape == (2, 50) and M.shape == (2, 2, 50)
    assert np.all(eps[-10:] == 0) and np.all(M == np.swapaxes(M, 0, 1))


@pytest.mark.parametrize("params", [co.CoefficientParams.plaplace(2.5, 0.1),
                                    co.CoefficientParams.plaplace(6.0, 0.1),
                                    co.CoefficientParams.fully_nonlinear(0.5, 0.1),
                                    co.CoefficientParams.general_quasilinear(1.0, 3.0, 0.1)])
def test_jet_fuzz_clean(params):
    rep = jet_fuzz(params, 5000, rng(7))
    assert rep.passed and rep.adversarial == 500
    assert rep.worst_cs_ratio <= 1 + 1e-12 and rep.worst_cs_ratio > 0.999


def test_cutoff_properties():
    c = Cutoff()
    x = np.array([[0.0, 0.4, 0.97, 0.7], [0.3, -0.5, 0.0, 0.0]])
    eta, eta_t, D, H = c.evaluate(x, -0.1)
    assert eta[0] == 1.0 and eta[1] == 1.0 and eta[2] == 0.0 and 0 < eta[3] < 1
    assert np.all(D[:, :2] == 0)
    assert c.evaluate(np.zeros((2, 1)), -0.95)[0][0] == 0.0
    with pytest.raises(ValueError):
        Cutoff(0.9, 0.5)


def test_cutoff_derivatives_match_finite_differences():
    c = Cutoff()
    x = np.array([[0.72], [-0.61]])
    t, h = -0.5, 1e-5
    eta, eta_t, D, H = c.evaluate(x, t)
    assert abs((c.evaluate(x, t + h)[0] - c.evaluate(x, t - h)[0])[0] / (2 * h) - eta_t[0]) < 1e-5
    for i in range(2):
        e = np.zeros((2, 1))
        e[i] = h
        assert abs((c.evaluate(x + e, t)[0] - c.evaluate(x - e, t)[0])[0] / (2 * h) - D[i, 0]) < 1e-5
        np.testing.assert_allclose((c.evaluate(x + e, t)[2] - c.evaluate(x - e, t)[2])[:, 0] / (2 * h),
                                   H[i, :, 0], atol=1e-4)


def _solution(f, h=1 / 8):
    return sample_solution(f, Grid(2, 1.0, h, 1 / 64, (-1.0, 0.0)))


def test_auxiliary_v_nonnegative_and_zero_for_static():
    P = co.CoefficientParams.plaplace(3.0, 0.1)
    sol = _solution(lambda x, t: np.sin(x[0]) + t * x[1] ** 2)
    cfg = BernsteinConfig.from_solution(sol, 1.0, 0.0)
    assert cfg.A > 0
    assert all(np.all(f.values >= 0) for f in auxiliary_v(sol, cfg, P))
    static = _solution(lambda x, t: x[0] + 0 * t)
    cfg0 = BernsteinConfig.from_solution(static, 1.0, 0.0)
    assert cfg0.A == 0.0
    assert all(np.all(f.values == 0) for f in auxiliary_v(static, cfg0, P))


def test_config_validation():
    for kw in ({"delta": 0.0, "beta": 0.0}, {"delta": 1.0, "beta": 1.0},
               {"delta": 1.0, "beta": 0.0, "A": -1.0}):
        with pytest.raises(ValueError):
            BernsteinConfig(**kw)


def test_delta_sweep_static_picks_first_rung():
    P = co.CoefficientParams.plaplace(3.0, 0.1)
    res = delta_sweep(_solution(lambda x, t: 0.3 * x[0] + 0 * t), P)
    assert res.delta == 2.0**-6 and res.report.verdict and len(res.trace) == 1


def test_defect_report_fields():
    P = co.CoefficientParams.plaplace(3.0, 0.1)
    sol = _solution(lambda x, t: np.cos(x[0]) * np.exp(t))
    cfg = BernsteinConfig.from_solution(sol, 4.0, 0.0)
    rep = defect_report(sol, cfg, P)
    assert rep.bound >= 2 * 4.0 and rep.max_v >= 0
    assert rep.verdict == (rep.dichotomy and rep.A <= rep.bound)
    assert 0 <= rep.positive_defect_fraction <= 1


def test_delta_sweep_failure():
    P = co.CoefficientParams.plaplace(3.0, 0.1)
    sol = _solution(lambda x, t: 50 * t + 0 * x[0])
    with pytest.raises(DeltaSweepError) as info:
        delta_sweep(sol, P, ladder=[1e-3, 1e-2])
    assert info.value.best_margin < 0
    with pytest.raises(ValueError):
        delta_sweep(sol, P, ladder=[1.0, 0.5])
