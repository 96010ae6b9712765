"""Dispatch of experiment commands onto the library."""

from __future__ import annotations

import dataclasses
import math
import os
import time
from typing import Callable

import numpy as np

from .. import coefficients as co
from ..bernstein import (BernsteinConfig, check_domination, defect_report, delta_sweep,
                         jet_fuzz, select_beta)
from ..core import Field, Grid, gradient, gradient_array
from ..errors import DegenLabError, DeltaSweepError, DivergenceError, FitError
from ..exact import (ExactSolution, HalfCylinderSample, affine_datum, build_barrier,
                     residual_oracle, verify_barrier)
from ..regularity import (fit_spatial_holder, fit_time_lipschitz, mixed_gradient_time_check,
                          mixed_time_exponent, scaling_exponents)
from ..solver import (ProblemSpec, RescaledExact, check_comparison, default_gradient_cap,
                      epsilon_sweep, intrinsic_rescale, make_problem, rescaled_params, solve)
from .config import DataConfig, ExperimentConfig, ProblemConfig, config_to_dict
from .output import ResultRecord, input_hash

ANALYTIC_EXPONENT_TOL = 1e-6


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox4x64-10 stream keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(key=seed))


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("DEGENLAB_THREADS", "1")))
    except ValueError:
        return 1


# --------------------------------------------------------------------------
# problem construction


def build_params(pc: ProblemConfig, epsilon: float | None = None) -> co.CoefficientParams:
    eps = pc.epsilon if epsilon is None else epsilon
    if pc.family == co.PLAPLACE:
        return co.CoefficientParams.plaplace(pc.p, eps)
    if pc.family == co.FULLY_NONLINEAR:
        F = co.TRACE
        if pc.operator.kind == "bellman":
            F = co.bellman([np.array(A, dtype=np.float64) for A in pc.operator.matrices],
                           pc.operator.scale)
        return co.CoefficientParams.fully_nonlinear(pc.gamma, eps, F)
    return co.CoefficientParams.general_quasilinear(pc.gamma, pc.p, eps)


def build_data(d: DataConfig, params: co.CoefficientParams, dim: int) -> Callable:
    """Callable ``g(x, t)`` for the configured data kind."""
    if d.kind == "exact":
        return ExactSolution.for_params(params, dim)
    if d.kind == "constant":
        return lambda x, t: np.full(np.asarray(x).shape[1:], d.value)
    if d.kind == "affine":
        return affine_datum(d.coeffs, d.speed, d.value)
    if d.kind == "cos":
        return lambda x, t: d.amplitude * np.prod(np.cos(d.frequency * np.asarray(x)), axis=0)
    if d.kind == "bump":
        return lambda x, t: d.value + d.amplitude * np.exp(-np.sum(np.asarray(x) ** 2, axis=0) / d.width**2)
    if d.kind == "halfcube":
        c = float(d.coeffs[0])
        return lambda x, t: c * x[0] + d.amplitude * x[-1] * (1.0 - x[0] ** 2)
    raise ValueError(f"unknown data kind {d.kind!r}")


def build_problem(pc: ProblemConfig, params: co.CoefficientParams | None = None,
                  h: float | None = None, data: Callable | None = None, **overrides) -> ProblemSpec:
    params = params or build_params(pc)
    data = data or build_data(pc.data, params, pc.dim)
    extent = overrides.get("extent", pc.extent)
    half = overrides.get("half_space", pc.half_space)
    t_span = overrides.get("t_span", pc.t_span)
    t_span = tuple(t_span) if t_span is not None else (-extent**2, 0.0)
    h = h or pc.h
    if pc.dt is None or h != pc.h or overrides:
        return make_problem(params, data, dim=pc.dim, extent=extent, h=h, t_span=t_span,
                            gradient_cap=pc.gradient_cap, half_space=half)
    grid = Grid(pc.dim, extent, h, pc.dt, t_span, half)
    return ProblemSpec(params, grid, data, gradient_cap=pc.gradient_cap)


def _final_error(spec: ProblemSpec, rep, exact) -> float:
    last = rep.solution.levels[-1]
    return float(np.max(np.abs(last.values - exact(spec.grid.coords(), last.t))))


def _predicted_exponent(params: co.CoefficientParams) -> float:
    if params.family == co.PLAPLACE:
        return 1.0 / (params.p - 1.0)
    return 1.0 / (1.0 + params.gamma)


# --------------------------------------------------------------------------
# commands


def cmd_solve(cfg: ExperimentConfig, rec: ResultRecord) -> None:
    pc, opt = cfg.problem, cfg.options
    spec = build_problem(pc)
    rep = solve(spec, max_levels=opt.max_levels, monitor_radius=opt.monitor_radius)
    rec.metrics.update(sup_ut=rep.sup_ut, dt=rep.dt_used, steps=rep.steps,
                       max_observed_gradient=rep.max_observed_gradient,
                       cfl_margin=rep.cfl_margin, gradient_cap=spec.gradient_cap)
    last = rep.solution.levels[-1]
    x = spec.grid.coords().reshape(spec.grid.dim, -1)
    cols = [f"x{i + 1}" for i in range(spec.grid.dim)] + ["u"]
    rows = [tuple(x[:, j]) + (last.values.reshape(-1)[j],) for j in range(x.shape[1])]
    if pc.data.kind == "exact":
        exact = spec.boundary_data
        rec.metrics["final_error"] = _final_error(spec, rep, exact)
        rec.metrics["exact_speed"] = exact.speed
        rec.verdicts["sup_ut_near_exact"] = abs(rep.sup_ut - exact.speed) <= cfg.tolerances.ut_relative * exact.speed
    rec.add_table("solve_final_level", cols, rows)


def cmd_sweep_eps(cfg: ExperimentConfig, rec: ResultRecord) -> None:
    pc, opt, tol = cfg.problem, cfg.options, cfg.tolerances
    template = build_problem(pc, build_params(pc, opt.epsilons[0]))
    workers = min(thread_count(), len(opt.epsilons))
    entries = epsilon_sweep(template, opt.epsilons, radius=opt.monitor_radius, workers=workers,
                            max_levels=opt.max_levels)
    rec.add_table("sweep_eps_ut", ("eps", "sup_ut", "cfl_margin"),
                  [(e.epsilon, e.sup_ut, e.report.cfl_margin) for e in entries])
    uts = [e.sup_ut for e in entries]
    spread = (max(uts) - min(uts)) / min(uts)
    rec.metrics.update(spread=spread, dt=entries[0].report.dt_used, sup_ut_min=min(uts), sup_ut_max=max(uts))
    rec.verdicts["spread_within_tolerance"] = spread <= tol.spread
    if pc.data.kind == "exact":
        c = template.boundary_data.speed
        rec.metrics["exact_speed"] = c
        rec.verdicts["sup_ut_near_exact"] = all(abs(u - c) <= tol.ut_relative * c for u in uts)


def cmd_exponents(cfg: ExperimentConfig, rec: ResultRecord) -> None:
    pc, opt, tol = cfg.problem, cfg.options, cfg.tolerances
    params = build_params(pc)
    pred = _predicted_exponent(params)
    spec = build_problem(pc, params)
    rows = []

    def record(source, kind, rep, predicted):
        rows.append((source, kind, rep.fitted_exponent, rep.fitted_constant, rep.r_squared,
                     predicted, rep.pair_count))

    rec.metrics["predicted_spatial_exponent"] = pred
    if pc.data.kind == "exact":
        exact = spec.boundary_data
        g = spec.grid
        jet = exact.evaluate(g.coords(), g.t_span[1], hessian=False)
        rep = fit_spatial_holder(Field(g, jet.gradient, g.t_span[1]), predicted=pred)
        record("analytic", "spatial_gradient", rep, pred)
        rec.verdicts["analytic_spatial_exponent"] = rep.deviation <= ANALYTIC_EXPONENT_TOL
    sol = solve(spec, max_levels=opt.max_levels, monitor_radius=opt.monitor_radius).solution
    try:
        rep = fit_spatial_holder(gradient(sol.levels[-1]), predicted=pred)
        record("solver", "spatial_gradient", rep, pred)
        rec.metrics["solver_spatial_exponent"] = rep.fitted_exponent
        rec.verdicts["solver_spatial_exponent"] = rep.deviation <= tol.exponent
    except FitError as exc:
        rec.errors.append({"type": "FitError", "message": str(exc), "path": "spatial_gradient"})
    try:
        rep = fit_time_lipschitz(sol, opt.monitor_radius)
        record("solver", "time_lipschitz", rep, 1.0)
        rec.metrics["time_exponent"] = rep.fitted_exponent
        rec.metrics["time_lipschitz_constant"] = rep.fitted_constant
        rec.verdicts["time_exponent"] = rep.fitted_exponent >= tol.time_exponent_min
    except FitError as exc:
        rec.errors.append({"type": "FitError", "message": str(exc), "path": "time_lipschitz"})
    mixed = mixed_gradient_time_check(sol, pred, 1.0, radius=opt.monitor_radius)
    rec.metrics.update(mixed_exponent=mixed.exponent, mixed_max_ratio=mixed.max_ratio,
                       mixed_chain_remainder=mixed.max_chain_remainder,
                       mixed_samples=mixed.samples, mixed_skipped=mixed.skipped)
    rec.verdicts["mixed_ratio_finite"] = mixed.finite
    rec.add_table("exponents_fits", ("source", "kind", "fitted_exponent", "fitted_constant",
                                     "r_squared", "predicted_exponent", "pair_count"), rows)


def rescale_for_bernstein(sol, params, r: float, rho: float | None = None):
    """Intrinsic rescaling to ``Q_1`` with ``rho = C_0 + 1`` by default.

    ``C_0`` is the largest gradient norm of the stored levels on ``Q_r``.
    """
    mask = np.max(np.abs(sol.grid.coords()), axis=0) <= r * (1 + 1e-12)
    C0 = 0.0
    for f in sol.levels:
        if -r * r - 1e-14 <= f.t:
            g = gradient_array(f.values, sol.grid.h)
            C0 = max(C0, float(np.sqrt(np.sum(g * g, axis=0))[mask].max()))
    rho = C0 + 1.0 if rho is None else rho
    return intrinsic_rescale(sol, r, rho, params), rescaled_params(params, rho), C0, rho


def cmd_bernstein_check(cfg: ExperimentConfig, rec: ResultRecord) -> None:
    pc, opt = cfg.problem, cfg.options
    params = build_params(pc)
    sol = solve(build_problem(pc, params), max_levels=opt.max_levels,
                monitor_radius=opt.monitor_radius).solution
    R, PR, C0, rho = rescale_for_bernstein(sol, params, opt.rescale_radius, opt.rho)
    rec.metrics.update(C0=C0, rho=rho, rescaled_epsilon=PR.epsilon)
    try:
        res = delta_sweep(R, PR, opt.deltas)
    except DeltaSweepError as exc:
        rec.verdicts["delta_found"] = False
        rec.errors.append({"type": "DeltaSweepError", "message": str(exc), "best_margin": exc.best_margin})
        return
    r = res.report
    doubled = defect_report(R, BernsteinConfig(2 * res.delta, r.beta, A=r.A), PR)
    rec.metrics.update(delta=res.delta, A=r.A, beta=r.beta, bound=r.bound, max_v=r.max_v,
                       max_v_location=list(r.location), eta_at_max=r.eta_at_max,
                       ut_at_max=r.ut_at_max, gradient_factor=r.gradient_factor,
                       max_defect=r.max_defect, positive_defect_fraction=r.positive_defect_fraction,
                       skipped_nodes=r.skipped_nodes, doubled_margin=doubled.margin)
    rec.verdicts["delta_found"] = True
    rec.verdicts["conclusion_A_le_2delta"] = r.verdict
    rec.verdicts["doubled_delta_preserves_verdict"] = doubled.verdict
    rec.add_table("bernstein_delta_sweep", ("delta", "margin", "verdict"), list(res.trace))


def _fuzz_values(cfg: ExperimentConfig) -> tuple[float, ...]:
    if cfg.options.values is not None:
        return cfg.options.values
    return cfg.options.p_list if cfg.problem.family == co.PLAPLACE else cfg.options.gamma_list


def _with_value(pc: ProblemConfig, value: float) -> ProblemConfig:
    if pc.family == co.PLAPLACE:
        return dataclasses.replace(pc, p=value)
    return dataclasses.replace(pc, gamma=value)


def cmd_jet_fuzz(cfg: ExperimentConfig, rec: ResultRecord) -> None:
    pc, opt = cfg.problem, cfg.options
    rng = make_rng(cfg.seed)
    rows = []
    total = 0
    for v in _fuzz_values(cfg):
        rep = jet_fuzz(build_params(_with_value(pc, v)), opt.samples, rng, pc.dim, opt.adversarial_fraction)
        rows.append((v, rep.samples, rep.adversarial, rep.cs_violations, rep.ut_violations,
                     rep.worst_cs_ratio, rep.worst_ut_ratio))
        total += rep.cs_violations + rep.ut_violations
    rec.add_table("jet_fuzz_violations", ("value", "samples", "adversarial", "cs_violations",
                                          "ut_violations", "worst_cs_ratio", "worst_ut_ratio"), rows)
    rec.metrics["violations"] = total
    rec.verdicts["zero_violations"] = total == 0
    # domination rule at the selected beta over random parameters of this family
    lo, hi = (2.0, 10.0) if pc.family == co.PLAPLACE else (0.0, 5.0)
    vals = hi - (hi - lo) * rng.random(opt.domination_samples)
    drows = []
    for v in vals:
        b = select_beta(pc.family, float(v))
        d = check_domination(pc.family, float(v), b)
        drows.append((float(v), b, d.margin, d.holds, d.identity_holds))
    rec.add_table("jet_fuzz_domination", ("value", "beta", "margin", "holds", "identity_exact"), drows)
    rec.metrics["domination_min_margin"] = min(r[2] for r in drows)
    rec.verdicts["domination_holds"] = all(r[3] for r in drows)
    rec.verdicts["min_identity_exact"] = all(r[4] for r in drows)


def cmd_barrier_check(cfg: ExperimentConfig, rec: ResultRecord) -> None:
    """Barrier search on ``Q_1^+`` and the flat-boundary estimate on a half-cube solve.

    The solve always uses the unit half cube over ``t in [-1, 0]``; the
    boundary function is the tangential affine part of the data.
    """
    pc, opt, tol = cfg.problem, cfg.options, cfg.tolerances
    params = build_params(pc)
    d = pc.data
    if d.kind == "halfcube":
        phi = affine_datum(tuple(d.coeffs) + (0.0,))
    elif d.kind == "affine":
        phi = affine_datum(d.coeffs, d.speed, d.value)
    else:
        phi = affine_datum((0.0,) * pc.dim, 0.0, 0.0)
    spec = build_problem(pc, params, extent=1.0, half_space=True, t_span=(-1.0, 0.0))
    g = spec.grid
    x = g.coords()
    bound_u = opt.bound_u
    if bound_u is None:
        bound_u = max(float(np.max(np.abs(spec.boundary_data(x, t)))) for t in g.t_span)
    sample = HalfCylinderSample(pc.dim, opt.sample_h, opt.sample_h)
    trace = []
    try:
        b = build_barrier(phi, params, bound_u, sample, tol.barrier, trace=trace)
    finally:
        rec.add_table("barrier_search", ("beta", "A", "min_supersolution_defect",
                                         "min_flat_margin", "min_lateral_margin", "passed"),
                      [(bt, A, r.min_supersolution_defect, r.min_flat_margin,
                        r.min_lateral_margin, r.passed) for bt, A, r in trace])
    rep = verify_barrier(b, params, bound_u, sample, tol.barrier)
    rec.metrics.update(A=b.A, beta=b.beta, bound_u=bound_u,
                       min_supersolution_defect=rep.min_supersolution_defect)
    rec.verdicts["barrier_verified"] = rep.passed
    sol = solve(spec, max_levels=opt.max_levels, monitor_radius=opt.monitor_radius).solution
    xn = x[-1]
    interior = (xn > 0) & ~g.boundary_mask()
    flat_pts = x.copy()
    flat_pts[-1] = 0.0
    dn = float(np.max(np.abs(phi.grad(x, 0.0)[-1])))
    A_eff = b.beta * b.A + dn
    worst = 0.0
    for f in sol.levels:
        dev = np.abs(f.values - phi(flat_pts, f.t))
        worst = max(worst, float(np.max(dev[interior] / xn[interior])))
    rec.metrics.update(A_eff=A_eff, empirical_flat_constant=worst)
    rec.verdicts["flat_boundary_estimate"] = worst <= A_eff


def _comparison_cases(dim: int, base: Callable):
    def bump(x, t):
        return 0.2 * np.exp(-np.sum(np.asarray(x) ** 2, axis=0) / 0.25)

    def cosd(x, t):
        return 0.5 * np.prod(np.cos(np.asarray(x)), axis=0)

    def quad_lo(x, t):
        return 0.5 * x[0] ** 2 - 0.3

    def quad_hi(x, t):
        return 0.5 * np.sum(np.asarray(x) ** 2, axis=0) + 0.1 * np.sin(x[0])

    return [
        ("constant_shift", base, lambda x, t: base(x, t) + 0.1),
        ("smooth_bump", cosd, lambda x, t: cosd(x, t) + bump(x, t)),
        ("ordered_smooth", quad_lo, quad_hi),
    ]


def comparison_suite(params: co.CoefficientParams, dim: int, base: Callable,
                     tolerance: float = 1e-10, extent: float = 0.5, h: float = 1.0 / 16):
    """Dominating data must give dominating discrete solutions on one shared grid."""
    out = []
    t_span = (-extent**2, 0.0)
    for name, lo, hi in _comparison_cases(dim, base):
        probe = Grid(dim, extent, h, extent**2, t_span)
        cap = max(default_gradient_cap(probe, lo), default_gradient_cap(probe, hi))
        s_lo = make_problem(params, lo, dim=dim, extent=extent, h=h, gradient_cap=cap)
        s_hi = make_problem(params, hi, dim=dim, extent=extent, h=h, gradient_cap=cap)
        out.append((name, check_comparison(s_lo, s_hi, tolerance, save_every=1)))
    return out


def annulus_points(rng: np.random.Generator, dim: int, count: int = 100,
                   r_in: float = 0.3, r_out: float = 0.9):
    direc = rng.normal(size=(dim, count))
    direc /= np.linalg.norm(direc, axis=0)
    return direc * rng.uniform(r_in, r_out, count), -rng.random(count)


def cmd_scaling_check(cfg: ExperimentConfig, rec: ResultRecord) -> None:
    pc, opt, tol = cfg.problem, cfg.options, cfg.tolerances
    rows = []
    for p in opt.p_list:
        alpha = 1.0 / (p - 1.0)
        mu, nu = scaling_exponents(alpha, p)
        rows.append((p, alpha, mu, nu))
    rec.add_table("scaling_check_nu", ("p", "alpha", "mu", "nu"), rows)
    rec.metrics["max_nu_deviation"] = max(abs(r[3] - 1.0) for r in rows)
    rec.verdicts["nu_equals_one"] = rec.metrics["max_nu_deviation"] <= tol.algebra
    mrows = [(g, mixed_time_exponent(1.0 / (1.0 + g), 1.0), 1.0 / (2.0 + g)) for g in opt.gamma_list]
    rec.add_table("scaling_check_mixed", ("gamma", "mixed_exponent", "expected"), mrows)
    rec.verdicts["mixed_exponent_matches"] = all(abs(a - b) <= tol.algebra for _, a, b in mrows)

    params0 = build_params(pc, 0.0)
    rng = make_rng(cfg.seed)
    base = None
    if pc.family != co.GENERAL_QUASILINEAR and pc.operator.kind == "trace":
        exact = ExactSolution.for_params(params0, pc.dim)
        r, rho = opt.scaling
        resc = RescaledExact(exact, r, rho, params0.time_scaling_exponent)
        x, t = annulus_points(rng, pc.dim)
        res = float(np.max(np.abs(residual_oracle(resc, params0, x, t))))
        rec.metrics["rescaled_residual"] = res
        rec.verdicts["rescaled_exact_residual"] = res <= tol.residual
        base = exact
    eps = pc.epsilon if pc.epsilon > 0 else 0.1
    if base is None:
        base = lambda x, t: 0.5 * np.sum(np.asarray(x) ** 2, axis=0)  # noqa: E731
    crow = []
    for name, res in comparison_suite(build_params(pc, eps), pc.dim, base, tol.comparison):
        crow.append((name, res.min_gap, res.holds))
        rec.verdicts[f"comparison_{name}"] = res.holds
    rec.add_table("scaling_check_comparison", ("case", "min_gap", "holds"), crow)


def cmd_convergence(cfg: ExperimentConfig, rec: ResultRecord) -> None:
    pc, opt, tol = cfg.problem, cfg.options, cfg.tolerances
    if pc.data.kind != "exact":
        rec.errors.append({"type": "ConfigError", "message": "convergence needs exact data",
                           "path": "problem.data.kind"})
        return
    params = build_params(pc)
    rows, errs = [], []
    h = pc.h
    for _ in range(opt.refinements + 1):
        spec = build_problem(pc, params, h=h)
        rep = solve(spec, max_levels=opt.max_levels, monitor_radius=opt.monitor_radius)
        e = _final_error(spec, rep, spec.boundary_data)
        factor = errs[-1] / e if errs else float("nan")
        errs.append(e)
        rows.append((h, e, rep.sup_ut, factor))
        h = h / 2.0
    rec.add_table("convergence_error", ("h", "final_error", "sup_ut", "factor"), rows)
    factors = [r[3] for r in rows[1:]]
    rec.metrics["min_factor"] = min(factors)
    rec.verdicts["refinement_factor"] = min(factors) >= tol.convergence_factor


COMMAND_TABLE = {
    "solve": cmd_solve,
    "sweep-eps": cmd_sweep_eps,
    "exponents": cmd_exponents,
    "bernstein-check": cmd_bernstein_check,
    "jet-fuzz": cmd_jet_fuzz,
    "barrier-check": cmd_barrier_check,
    "scaling-check": cmd_scaling_check,
    "convergence": cmd_convergence,
}


def record_config(cfg: ExperimentConfig) -> dict:
    """Config echo without the output directory, so outputs do not depend on it."""
    d = config_to_dict(cfg)
    d.pop("output_dir", None)
    return d


def run(cfg: ExperimentConfig) -> ResultRecord:
    """Execute one experiment; module errors become structured error entries."""
    echo = record_config(cfg)
    rec = ResultRecord(cfg.command, input_hash(echo), echo)
    start = time.perf_counter()
    try:
        COMMAND_TABLE[cfg.command](cfg, rec)
    except DivergenceError as exc:
        rec.diverged = True
        rec.errors.append({"type": type(exc).__name__, "message": str(exc),
                           "node": list(exc.node) if exc.node is not None else None,
                           "time": exc.time})
    except DegenLabError as exc:
        entry = {"type": type(exc).__name__, "message": str(exc)}
        for attr in ("failing_condition", "best_margin", "path"):
            if getattr(exc, attr, None) is not None:
                entry[attr] = getattr(exc, attr)
        rec.errors.append(entry)
    rec.wall_clock = time.perf_counter() - start
    return rec
