"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import json
import time
from fractions import Fraction

import numpy as np
import pytest

from degenlab import coefficients as co
from degenlab.bernstein import (BernsteinConfig, check_domination, defect_report, delta_sweep,
                                jet_fuzz, select_beta)
from degenlab.core import Field, Grid, gradient
from degenlab.exact import (ExactSolution, HalfCylinderSample, affine_datum, build_barrier,
                            evaluate_exact, residual_oracle, verify_barrier)
from degenlab.harness import emit_tables, parse_config, run
from degenlab.harness.runner import annulus_points, comparison_suite, rescale_for_bernstein
from degenlab.regularity import (fit_spatial_holder, mixed_time_exponent, scaling_exponents)
from degenlab.solver import RescaledExact, epsilon_sweep, make_problem, solve

from conftest import rng

EPS_LADDER = (0.2, 0.1, 0.05, 0.025)


def report(log, k, ok, detail):
    log[k] = (bool(ok), detail)
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="module")
def plaplace_sweep():
    P = co.CoefficientParams.plaplace(3.0, EPS_LADDER[0])
    ex = ExactSolution.for_params(P, 2)
    template = make_problem(P, ex, h=1.0 / 32)
    t0 = time.perf_counter()
    entries = epsilon_sweep(template, EPS_LADDER, radius=0.5)
    return entries, time.perf_counter() - t0


def _spread(values):
    return (max(values) - min(values)) / min(values)


def test_criterion_01_exact_constants(acceptance_log):
    t0 = time.perf_counter()
    c23 = ExactSolution(co.PLAPLACE, 2, p=3.0).speed
    C21 = ExactSolution(co.FULLY_NONLINEAR, 2, gamma=1.0).speed
    # independent rational evaluation of both formulas
    pc = Fraction(3, 2)
    c_ref = 2 * pc ** 2
    k = 1 + Fraction(1, 2)
    C_ref = k ** 2 * (2 - 1 + Fraction(1, 2))
    x, t = annulus_points(rng(11), 2)
    worst = 0.0
    for fam, params in ((co.PLAPLACE, co.CoefficientParams.plaplace(3.0, 0.0)),
                        (co.FULLY_NONLINEAR, co.CoefficientParams.fully_nonlinear(1.0, 0.0))):
        sol = ExactSolution.for_params(params, 2)
        worst = max(worst, float(np.max(np.abs(residual_oracle(sol, params, x, t)))))
    jet_c = float(evaluate_exact(ExactSolution(co.PLAPLACE, 2, p=3.0), x[:, :1], 0.0).ut[0])
    elapsed = time.perf_counter() - t0
    ok = (abs(c23 - float(c_ref)) <= 1e-12 and abs(C21 - float(C_ref)) <= 1e-12
          and abs(jet_c - 4.5) <= 1e-12 and worst <= 1e-10 and elapsed < 1.0)
    report(acceptance_log, 1, ok, f"c_23={c23!r} C_21={C21!r} max residual={worst:.2e} ({elapsed:.2f}s)")
    assert ok


def test_criterion_02_uniform_ut_bound(acceptance_log, plaplace_sweep):
    entries, elapsed = plaplace_sweep
    uts = [e.sup_ut for e in entries]
    ok = _spread(uts) <= 0.05 and all(4.05 <= u <= 4.95 for u in uts) and elapsed < 300
    report(acceptance_log, 2, ok, f"sup|u_t| = {[round(u, 6) for u in uts]} "
           f"spread={_spread(uts):.2e} ({elapsed:.0f}s)")
    assert ok


def test_criterion_03_fully_nonlinear(acceptance_log):
    P = co.CoefficientParams.fully_nonlinear(1.0, EPS_LADDER[0])
    ex = ExactSolution.for_params(P, 2)
    t0 = time.perf_counter()
    entries = epsilon_sweep(make_problem(P, ex, h=1.0 / 32), EPS_LADDER, radius=0.5)
    elapsed = time.perf_counter() - t0
    uts = [e.sup_ut for e in entries]
    ok = _spread(uts) <= 0.05 and all(3.04 <= u <= 3.71 for u in uts) and elapsed < 300
    report(acceptance_log, 3, ok, f"sup|u_t| = {[round(u, 6) for u in uts]} "
           f"spread={_spread(uts):.2e} ({elapsed:.0f}s)")
    assert ok


def test_criterion_04_spatial_exponent(acceptance_log, plaplace3_fine_run):
    t0 = time.perf_counter()
    g = Grid(2, 0.75, 1.0 / 64, 0.75**2 / 128, (-0.75**2, 0.0))
    devs = []
    for p in (2.5, 3.0, 4.0):
        ex = ExactSolution(co.PLAPLACE, 2, p=p)
        G = Field(g, ex.evaluate(g.coords(), 0.0, hessian=False).gradient, 0.0)
        devs.append(fit_spatial_holder(G, predicted=1.0 / (p - 1.0)).deviation)
    spec, rep, _ = plaplace3_fine_run
    fit = fit_spatial_holder(gradient(rep.solution.levels[-1]), predicted=0.5)
    elapsed = time.perf_counter() - t0
    ok = max(devs) <= 1e-6 and fit.deviation <= 0.1
    report(acceptance_log, 4, ok, f"analytic max deviation={max(devs):.1e}, "
           f"solver exponent={fit.fitted_exponent:.4f} (fit {elapsed:.1f}s + shared solve)")
    assert ok


def test_criterion_05_exponent_algebra(acceptance_log):
    t0 = time.perf_counter()
    r = rng(5)
    ps = 10.0 - 8.0 * r.random(100)
    nu_dev = max(abs(scaling_exponents(1.0 / (p - 1.0), p)[1] - 1.0) for p in ps)
    gs = 5.0 - 5.0 * r.random(100)
    mix_dev = max(abs(mixed_time_exponent(1.0 / (1.0 + g), 1.0) - 1.0 / (2.0 + g)) for g in gs)
    fams = (co.PLAPLACE, co.FULLY_NONLINEAR, co.GENERAL_QUASILINEAR)
    min_margin, identities = np.inf, True
    for i in range(200):
        fam = fams[i % 3]
        v = 10.0 - 8.0 * r.random() if fam == co.PLAPLACE else 5.0 - 5.0 * r.random()
        d = check_domination(fam, v, select_beta(fam, v))
        min_margin = min(min_margin, d.margin)
        identities &= d.identity_holds and d.holds
    elapsed = time.perf_counter() - t0
    ok = nu_dev <= 1e-12 and mix_dev <= 1e-12 and min_margin >= 0 and identities and elapsed < 1.0
    report(acceptance_log, 5, ok, f"nu dev={nu_dev:.1e} mixed dev={mix_dev:.1e} "
           f"min domination margin={min_margin:.3g} ({elapsed:.2f}s)")
    assert ok


def test_criterion_06_jet_fuzz(acceptance_log):
    t0 = time.perf_counter()
    r = rng(6)
    cases = ([co.CoefficientParams.plaplace(p, 0.1) for p in (2.5, 3.0, 4.0)]
             + [co.CoefficientParams.fully_nonlinear(g, 0.1) for g in (0.5, 1.0, 2.0)]
             + [co.CoefficientParams.general_quasilinear(g, 3.0, 0.1) for g in (0.5, 1.0, 2.0)])
    reps = [jet_fuzz(P, 100_000, r) for P in cases]
    elapsed = time.perf_counter() - t0
    viol = sum(x.cs_violations + x.ut_violations for x in reps)
    adv = sum(x.adversarial for x in reps)
    ok = viol == 0 and adv > 0 and elapsed < 30
    report(acceptance_log, 6, ok, f"{len(reps)} x 1e5 jets ({adv} aligned), violations={viol} ({elapsed:.1f}s)")
    assert ok


def test_criterion_07_bernstein_conclusion(acceptance_log, plaplace_sweep):
    entries, _ = plaplace_sweep
    entry = next(e for e in entries if e.epsilon == 0.05)
    t0 = time.perf_counter()
    P = co.CoefficientParams.plaplace(3.0, 0.05)
    R, PR, C0, rho = rescale_for_bernstein(entry.report.solution, P, 0.75)
    res = delta_sweep(R, PR)
    rep = res.report
    doubled = defect_report(R, BernsteinConfig(2 * res.delta, rep.beta, A=rep.A), PR)
    elapsed = time.perf_counter() - t0
    ok = (np.isfinite(res.delta) and rep.verdict and rep.A <= 2 * res.delta
          and doubled.verdict and elapsed < 120)
    report(acceptance_log, 7, ok, f"delta={res.delta} A={rep.A:.4f} rho={rho:.4f} "
           f"max v at {tuple(round(c, 3) for c in rep.location)} doubled ok={doubled.verdict} ({elapsed:.1f}s)")
    assert ok


def test_criterion_08_boundary_barrier(acceptance_log):
    t0 = time.perf_counter()
    P = co.CoefficientParams.plaplace(3.0, 0.1)
    phi = affine_datum((1.0, 0.0))

    def data(x, t):
        return x[0] + 0.5 * x[1] * (1.0 - x[0] ** 2)

    spec = make_problem(P, data, dim=2, extent=1.0, h=1.0 / 32, t_span=(-1.0, 0.0), half_space=True)
    x = spec.grid.coords()
    bound_u = float(np.max(np.abs(data(x, 0.0))))
    sample = HalfCylinderSample(2, 1.0 / 64, 1.0 / 64)
    b = build_barrier(phi, P, bound_u, sample)
    vb = verify_barrier(b, P, bound_u, sample)
    sol = solve(spec).solution
    xn = x[-1]
    interior = (xn > 0) & ~spec.grid.boundary_mask()
    flat = x.copy()
    flat[-1] = 0.0
    A_eff = b.beta * b.A + float(np.max(np.abs(phi.grad(x, 0.0)[-1])))
    worst = max(float(np.max(np.abs(f.values - phi(flat, f.t))[interior] / xn[interior]))
                for f in sol.levels)
    elapsed = time.perf_counter() - t0
    ok = vb.min_supersolution_defect >= -1e-8 and vb.passed and worst <= A_eff and elapsed < 300
    report(acceptance_log, 8, ok, f"(A, beta)=({b.A}, {b.beta}) defect>={vb.min_supersolution_defect:.3g} "
           f"max|u-phi|/x_n={worst:.4f} <= A_eff={A_eff} ({elapsed:.1f}s)")
    assert ok


def test_criterion_09_scaling_invariance(acceptance_log):
    t0 = time.perf_counter()
    worst = 0.0
    x, t = annulus_points(rng(9), 2)
    for params in (co.CoefficientParams.plaplace(3.0, 0.0), co.CoefficientParams.fully_nonlinear(1.0, 0.0)):
        ex = ExactSolution.for_params(params, 2)
        resc = RescaledExact(ex, 0.5, 2.0, params.time_scaling_exponent)
        worst = max(worst, float(np.max(np.abs(residual_oracle(resc, params, x, t)))))
    P = co.CoefficientParams.plaplace(3.0, 0.1)
    suite = comparison_suite(P, 2, ExactSolution.for_params(P, 2), tolerance=1e-10)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and len(suite) == 3 and all(r.holds for _, r in suite) and elapsed < 120
    gaps = {name: round(r.min_gap, 6) for name, r in suite}
    report(acceptance_log, 9, ok, f"rescaled residual={worst:.1e} comparison gaps={gaps} ({elapsed:.1f}s)")
    assert ok


def test_criterion_10_determinism_and_convergence(acceptance_log, tmp_path, plaplace3_fine_run):
    t0 = time.perf_counter()
    identical = True
    for doc in ({"command": "jet-fuzz", "seed": 123, "options": {"samples": 20000}},
                {"command": "scaling-check", "seed": 5},
                {"command": "solve", "problem": {"h": 0.0625}}):
        cfg = parse_config(json.dumps(doc))
        outs = []
        for tag in ("a", "b"):
            paths = emit_tables(run(cfg), tmp_path / f"{doc['command']}_{tag}")
            outs.append({p.name: p.read_bytes() for p in paths})
        identical &= outs[0] == outs[1] and len(outs[0]) > 1
    P = co.CoefficientParams.plaplace(3.0, 0.05)
    ex = ExactSolution.for_params(P, 2)
    coarse = solve(make_problem(P, ex, h=1.0 / 32)).solution.levels[-1]
    e_coarse = float(np.max(np.abs(coarse.values - ex(coarse.grid.coords(), 0.0))))
    spec, rep, _ = plaplace3_fine_run
    fine = rep.solution.levels[-1]
    e_fine = float(np.max(np.abs(fine.values - ex(fine.grid.coords(), 0.0))))
    factor = e_coarse / e_fine
    elapsed = time.perf_counter() - t0
    ok = identical and factor >= 1.8 and elapsed < 600
    report(acceptance_log, 10, ok, f"byte-identical={identical} error h=1/32: {e_coarse:.4f} "
           f"h=1/64: {e_fine:.4f} factor={factor:.2f} ({elapsed:.1f}s + shared solve)")
    assert ok
