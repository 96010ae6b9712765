import math
from fractions import Fraction

import numpy as np
import pytest

from degenlab.core import Field, Grid, gradient, sample, sample_solution
from degenlab.errors import FitError, GridError
from degenlab.regularity import (ExponentReport, fit_spatial_holder, fit_time_lipschitz,
                                 mixed_gradient_time_check, mixed_time_exponent, radius_ladder,
                                 scaling_exponents)


def _frac_exponents(a, p):
    d = 2 + a * (2 - p)
    return a / d, (1 + a) / d


def test_scaling_exponent_examples():
    mu, nu = scaling_exponents(0.25, 3.0)
    assert _frac_exponents(Fraction(1, 4), Fraction(3)) == (Fraction(1, 7), Fraction(5, 7))
    assert math.isclose(mu, 1 / 7, rel_tol=1e-15) and math.isclose(nu, 5 / 7, rel_tol=1e-15)
    mu, nu = scaling_exponents(0.5, 4.0)
    assert math.isclose(mu, 0.5) and math.isclose(nu, 1.5)
    assert scaling_exponents(0.5, 2.0) == (0.25, 0.75)
    with pytest.raises(ValueError):
        scaling_exponents(1.0, 4.0)


def test_mixed_exponent_examples():
    assert mixed_time_exponent(1.0, 1.0) == 0.5
    assert math.isclose(mixed_time_exponent(0.5, 1.0), 1 / 3)
    for bad in ((0.0, 1.0), (0.5, 1.5)):
        with pytest.raises(ValueError):
            mixed_time_exponent(*bad)


def test_radius_ladder():
    r = radius_ladder(0.01, 0.5)
    assert r[0] == pytest.approx(0.04) and r[-1] <= 0.5
    np.testing.assert_allclose(r[1:] / r[:-1], math.sqrt(2))
    assert radius_ladder(0.2, 0.5).size == 0


def _grid(h=1 / 64, extent=1.0):
    return Grid(2, extent, h, h, (-0.25, 0.0))


@pytest.mark.parametrize("a", [0.3, 0.5, 1.0])
def test_power_gradient_exponent_recovered(a):
    g = _grid()
    x = g.coords()
    r = np.sqrt(x[0] ** 2 + x[1] ** 2)
    G = Field(g, np.stack([r**a, 0 * r]), 0.0)
    rep = fit_spatial_holder(G, predicted=a)
    assert rep.deviation < 1e-10 and rep.pair_count >= 8 and rep.r_squared > 0.999


@pytest.mark.parametrize("p,alpha", [(2.5, 2 / 3), (3.0, 0.5), (4.0, 1 / 3)])
def test_exact_profile_gradient_exponent(p, alpha):
    g = _grid()
    x = g.coords()
    k = p / (p - 1)
    r = np.sqrt(x[0] ** 2 + x[1] ** 2)
    G = Field(g, k * np.where(r > 0, r, 1.0) ** (k - 2) * x, 0.0)
    assert fit_spatial_holder(G, predicted=alpha).deviation < 1e-10


def test_spatial_fit_rejects_smooth_linear_gradient_at_flat_center():
    g = _grid(1 / 16)
    G = Field(g, np.zeros((2,) + g.shape), 0.0)
    with pytest.raises(FitError):
        fit_spatial_holder(G)
    with pytest.raises(GridError):
        fit_spatial_holder(Field(g, np.ones((2,) + g.shape), 0.0), center=(0.01, 0.0))
    with pytest.raises(ValueError):
        fit_spatial_holder(sample(lambda x, t: x[0], g, 0.0))


def test_exponent_report_guard():
    with pytest.raises(FitError):
        ExponentReport(1.0, 1.0, 1.0, None, 3)
    with pytest.raises(FitError):
        ExponentReport(float("nan"), 1.0, 1.0, None, 10)


def test_time_fit_linear_in_time():
    g = Grid(2, 0.5, 0.0625, 1 / 256, (-0.25, 0.0))
    sol = sample_solution(lambda x, t: 4.5 * t + x[0] ** 2, g)
    rep = fit_time_lipschitz(sol, 0.5)
    assert abs(rep.fitted_exponent - 1.0) < 1e-9
    assert math.isclose(rep.fitted_constant, 4.5, rel_tol=1e-9)


def test_time_fit_rejects_static_solution():
    g = Grid(2, 0.5, 0.0625, 1 / 256, (-0.25, 0.0))
    with pytest.raises(FitError):
        fit_time_lipschitz(sample_solution(lambda x, t: x[0] + 0 * t, g), 0.5)


def _mixed(h, alpha=0.5):
    g = Grid(2, 1.0, h, h * h, (-0.25, 0.0))
    f = lambda x, t: (x[0] ** 2 + x[1] ** 2) ** ((1 + alpha) / 2) * (1 + t)  # noqa: E731
    return mixed_gradient_time_check(sample_solution(f, g), alpha, 1.0, radius=0.5)


def test_mixed_check_finite_and_stable():
    coarse, fine = _mixed(1 / 16), _mixed(1 / 32)
    assert coarse.finite and fine.finite
    assert coarse.exponent == pytest.approx(1 / 3)
    assert coarse.samples > 0 and fine.samples > 0
    assert fine.max_ratio <= 2 * coarse.max_ratio
    assert fine.max_chain_remainder <= 2 * coarse.max_chain_remainder + 1e-12


def test_mixed_check_static_gradient_is_zero():
    g = Grid(2, 1.0, 1 / 16, 1 / 256, (-0.25, 0.0))
    rep = mixed_gradient_time_check(sample_solution(lambda x, t: x[0] ** 2 + 0 * t, g), 0.5, 1.0)
    assert rep.max_ratio == 0.0 and rep.max_chain_remainder == 0.0
