"""Explicit finite-difference evolution of the regularized problems."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import coefficients as co
from .core import (Field, Grid, SpaceTimeSolution, cylinder_mask, gradient_array,
                   in_time_window, interior_derivatives)
from .errors import CFLViolation, DivergenceError, GridError
from .exact import ExactJet

CFL_SAFETY = 0.4


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Regularized Cauchy-Dirichlet problem on the (half-)cube of ``grid``.

    ``boundary_data(x, t)`` gives the Dirichlet values on the spatial boundary;
    ``initial_data(x)`` the values at ``t_start`` (defaults to the boundary
    data at ``t_start``).
    """

    params: co.CoefficientParams
    grid: Grid
    boundary_data: Callable
    initial_data: Callable | None = None
    gradient_cap: float | None = None

    def __post_init__(self):
        if not self.params.epsilon > 0:
            raise ValueError("the solver only evolves regularized problems (epsilon > 0)")
        if self.gradient_cap is None:
            object.__setattr__(self, "gradient_cap", default_gradient_cap(self.grid, self.boundary_data))
        if self.gradient_cap < 0:
            raise ValueError("gradient_cap must be >= 0")
        t0 = self.grid.t_span[0]
        x = self.grid.coords()
        bmask = self.grid.boundary_mask()
        init = self.initial_values()
        bd = np.broadcast_to(np.asarray(self.boundary_data(x, t0), dtype=np.float64), self.grid.shape)
        gap = np.max(np.abs(init[bmask] - bd[bmask]))
        if gap > 1e-9 * max(1.0, float(np.max(np.abs(bd)))):
            raise ValueError(f"initial and boundary data disagree on the corner set (gap {gap:.3g})")

    def initial_values(self) -> np.ndarray:
        x = self.grid.coords()
        t0 = self.grid.t_span[0]
        if self.initial_data is None:
            vals = self.boundary_data(x, t0)
        else:
            vals = self.initial_data(x)
        return np.broadcast_to(np.asarray(vals, dtype=np.float64), self.grid.shape).copy()

    def with_params(self, params: co.CoefficientParams) -> "ProblemSpec":
        return replace(self, params=params)


@dataclass(frozen=True, eq=False)
class SolveReport:
    solution: SpaceTimeSolution | None
    dt_used: float
    max_observed_gradient: float
    cfl_margin: float
    diverged: bool
    sup_ut: float
    monitor_radius: float
    steps: int
    message: str = ""


def default_gradient_cap(grid: Grid, data: Callable) -> float:
    """Max gradient of the data on the grid (three time slices) plus one."""
    x = grid.coords()
    t0, t1 = grid.t_span
    best = 0.0
    for t in (t0, 0.5 * (t0 + t1), t1):
        vals = np.broadcast_to(np.asarray(data(x, t), dtype=np.float64), grid.shape)
        g = gradient_array(vals, grid.h)
        best = max(best, float(np.sqrt(np.sum(g * g, axis=0)).max()))
    return best + 1.0


def cfl_dt(params: co.CoefficientParams, h: float, G: float, dim: int = 1) -> float:
    """``0.4 h^2 / (2 dim Lambda (eps^2 + G^2)^e)``, largest multiplier on ``[0, G]``."""
    Lam = co.ellipticity_of(params).Lam
    e = params.multiplier_exponent
    eps2 = params.epsilon**2
    m = max((eps2 + G * G) ** e, eps2**e if eps2 > 0 else 0.0)
    return CFL_SAFETY * h * h / (2.0 * dim * Lam * m)


def make_problem(params: co.CoefficientParams, boundary_data: Callable, *, dim: int = 2,
                 extent: float = 0.75, h: float = 1.0 / 32, t_span=None,
                 initial_data: Callable | None = None, gradient_cap: float | None = None,
                 half_space: bool = False, step_multiple: int = 128) -> ProblemSpec:
    """Build a ProblemSpec whose ``dt`` satisfies the CFL rule at the gradient cap.

    The step count is rounded up to a multiple of ``step_multiple`` so that
    evenly spaced levels can be stored.  ``t_span`` defaults to
    ``(-extent^2, 0)``.
    """
    if t_span is None:
        t_span = (-extent * extent, 0.0)
    probe = Grid(dim, extent, h, t_span[1] - t_span[0], t_span, half_space)
    if gradient_cap is None:
        gradient_cap = default_gradient_cap(probe, boundary_data)
    width = t_span[1] - t_span[0]
    dt_max = cfl_dt(params, h, gradient_cap, dim)
    nsteps = step_multiple * math.ceil(width / dt_max / step_multiple)
    grid = probe.replace(dt=width / nsteps)
    return ProblemSpec(params, grid, boundary_data, initial_data, gradient_cap)


def _interior_rhs(u: np.ndarray, params: co.CoefficientParams, h: float):
    if u.ndim == 2 and params.is_quasilinear:
        return _quasilinear_rhs_2d(u, params, h)
    g, H = interior_derivatives(u, h)
    return co.principal_part(params, g, H), g


def _quasilinear_rhs_2d(u: np.ndarray, params: co.CoefficientParams, h: float):
    # same contraction as a_tensor(q) : D^2u, written out to avoid tensor temporaries
    c = u[1:-1, 1:-1]
    e, w, n, s_ = u[2:, 1:-1], u[:-2, 1:-1], u[1:-1, 2:], u[1:-1, :-2]
    gx = (e - w) / (2 * h)
    gy = (n - s_) / (2 * h)
    hxx = (e - 2 * c + w) / (h * h)
    hyy = (n - 2 * c + s_) / (h * h)
    hxy = (u[2:, 2:] - u[2:, :-2] - u[:-2, 2:] + u[:-2, :-2]) / (4 * h * h)
    s = params.epsilon**2 + gx * gx + gy * gy
    quad = gx * gx * hxx + 2.0 * gx * gy * hxy + gy * gy * hyy
    rhs = s**params.multiplier_exponent * (hxx + hyy + (params.p - 2.0) * quad / s)
    return rhs, (gx, gy)


def _interior(dim: int):
    return (slice(1, -1),) * dim


def step(state: Field, prev_time: float, spec: ProblemSpec, dt: float | None = None) -> Field:
    """One forward Euler step with coefficients frozen at ``state``."""
    dt = spec.grid.dt if dt is None else dt
    grid = spec.grid
    u = state.values
    rhs, _ = _interior_rhs(u, spec.params, grid.h)
    new = np.array(u, dtype=np.float64)
    new[_interior(grid.dim)] = u[_interior(grid.dim)] + dt * rhs
    t_new = prev_time + dt
    bmask = grid.boundary_mask()
    x = grid.coords()
    new[bmask] = np.broadcast_to(np.asarray(spec.boundary_data(x[:, bmask], t_new), dtype=np.float64),
                                 (int(bmask.sum()),))
    bad = ~np.isfinite(new)
    if bad.any():
        node = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DivergenceError(f"non-finite value at node {node}, t = {t_new}", node=node, time=t_new)
    return Field(grid, new, t_new)


def _pick_stride(nsteps: int, max_levels: int) -> int:
    for d in range(1, nsteps + 1):
        if nsteps % d == 0 and nsteps // d + 1 <= max_levels + 1:
            return d
    return nsteps


def solve(spec: ProblemSpec, save_every: int | None = None, max_levels: int = 128,
          monitor_radius: float = 0.5, raise_on_divergence: bool = True) -> SolveReport:
    """March the explicit scheme over ``t_span``.

    Every ``save_every``-th level is stored (default: at most ``max_levels``
    steps are kept), so the returned solution lives on a grid whose ``dt`` is
    ``save_every * spec.grid.dt``.  ``sup_ut`` is the sup of the step-wise
    backward difference ``|u^{k+1} - u^k| / dt`` over ``Q_r`` for
    ``r = monitor_radius``, measured at every step rather than on the stored
    levels.
    """
    grid = spec.grid
    params = spec.params
    dt, h, nsteps = grid.dt, grid.h, grid.nt
    stride = save_every or _pick_stride(nsteps, max_levels)
    if nsteps % stride:
        raise GridError(f"save_every={stride} does not divide the step count {nsteps}")
    x = grid.coords()
    bmask = grid.boundary_mask()
    xb = x[:, bmask]
    inner = _interior(grid.dim)
    r_mon = min(monitor_radius, grid.extent)
    mon = cylinder_mask(grid, r_mon)
    times = grid.times()
    cap2 = 2.0 * spec.gradient_cap

    u = spec.initial_values()
    saved = [u.copy()]
    max_grad = 0.0
    sup_ut = 0.0
    for k in range(nsteps):
        rhs, g = _interior_rhs(u, params, h)
        gmax = math.sqrt(float(np.max(sum(gi * gi for gi in g))))
        max_grad = max(max_grad, gmax)
        if not gmax <= cap2:
            msg = (f"observed gradient {gmax:.6g} exceeds 2*cap = {cap2:.6g} at t = {times[k]:.6g}")
            if raise_on_divergence:
                raise CFLViolation(msg, time=float(times[k]))
            return SolveReport(None, dt, max_grad, 0.0, True, sup_ut, r_mon, k, msg)
        new = u.copy()
        new[inner] = u[inner] + dt * rhs
        t_new = times[k + 1]
        new[bmask] = spec.boundary_data(xb, t_new)
        if not np.all(np.isfinite(new)):
            node = tuple(int(i) for i in np.argwhere(~np.isfinite(new))[0])
            msg = f"non-finite value at node {node}, t = {t_new:.6g}"
            if raise_on_divergence:
                raise DivergenceError(msg, node=node, time=float(t_new))
            return SolveReport(None, dt, max_grad, 0.0, True, sup_ut, r_mon, k + 1, msg)
        if in_time_window(t_new, r_mon):
            sup_ut = max(sup_ut, float(np.max(np.abs(new[mon] - u[mon]))) / dt)
        u = new
        if (k + 1) % stride == 0:
            saved.append(u.copy())
    sgrid = grid.replace(dt=grid.dt * stride)
    solution = SpaceTimeSolution.from_array(sgrid, np.stack(saved))
    margin = cfl_dt(params, h, max_grad, grid.dim) / dt
    return SolveReport(solution, dt, max_grad, margin, False, sup_ut, r_mon, nsteps)


@dataclass(frozen=True, eq=False)
class SweepEntry:
    epsilon: float
    report: SolveReport
    sup_ut: float


def epsilon_sweep(template: ProblemSpec, eps_list: Sequence[float], radius: float = 0.5,
                  workers: int = 1, **solve_kw) -> list[SweepEntry]:
    """Solve once per epsilon on one shared grid; results keep input order.

    The shared ``dt`` is the smallest CFL step over the ladder.
    """
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list) or any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing and positive")
    grid = template.grid
    width = grid.t_span[1] - grid.t_span[0]
    dt_max = min(cfl_dt(template.params.with_epsilon(e), grid.h, template.gradient_cap, grid.dim)
                 for e in eps_list)
    nsteps = grid.nt
    if grid.dt > dt_max * (1 + 1e-12):
        nsteps = 128 * math.ceil(width / dt_max / 128)
    shared = grid.replace(dt=width / nsteps)
    specs = [replace(template, params=template.params.with_epsilon(e), grid=shared) for e in eps_list]

    def run(s):
        rep = solve(s, monitor_radius=radius, **solve_kw)
        return SweepEntry(s.params.epsilon, rep, rep.sup_ut)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, specs))
    return [run(s) for s in specs]


# --------------------------------------------------------------------------
# intrinsic scaling


def rescaled_params(params: co.CoefficientParams, rho: float) -> co.CoefficientParams:
    """Regularization seen by ``(r rho)^{-1} u(r x, r^2 rho^k t)``: ``eps / rho``."""
    return params.with_epsilon(params.epsilon / rho)


@dataclass(frozen=True, eq=False)
class RescaledExact:
    """Analytic intrinsic rescaling ``(r rho)^{-1} u(r x, r^2 rho^k t)``."""

    base: object
    r: float
    rho: float
    time_exponent: float

    @property
    def time_factor(self) -> float:
        return self.r**2 * self.rho**self.time_exponent

    def __call__(self, x, t):
        return self.base(self.r * np.asarray(x), self.time_factor * t) / (self.r * self.rho)

    def evaluate(self, x, t, hessian: bool = True) -> ExactJet:
        jet = self.base.evaluate(self.r * np.asarray(x, dtype=np.float64), self.time_factor * t, hessian)
        rr = self.r * self.rho
        H = None if jet.hessian is None else jet.hessian * self.r**2 / rr
        return ExactJet(jet.value / rr, jet.gradient * self.r / rr, H, jet.ut * self.time_factor / rr)


def intrinsic_rescale(source, r: float, rho: float, params: co.CoefficientParams,
                      target: Grid | None = None):
    """Map a solution on ``Q_r^rho`` to one on ``Q_1``.

    Analytic sources (anything with ``evaluate``) give a :class:`RescaledExact`.
    A :class:`SpaceTimeSolution` is interpolated (bilinear in space, linear in
    time) onto ``target`` (default: ``extent 1``, ``h / r``, the source's level
    count over ``t in [-1, 0]``).
    """
    k = params.time_scaling_exponent
    if not isinstance(source, SpaceTimeSolution):
        return RescaledExact(source, r, rho, k)
    src = source.grid
    tf = r * r * rho**k
    if target is None:
        nt = max(2, src.nt)
        target = Grid(src.dim, 1.0, src.h / r, 1.0 / nt, (-1.0, 0.0), src.half_space)
    axes = [src.times()] + [src.axis(i) for i in range(src.dim)]
    interp = RegularGridInterpolator(axes, source.array, method="linear", bounds_error=True)
    x = target.coords()
    tol = 1e-9 * max(src.h, src.dt)
    levels = []
    for t in target.times():
        ts = tf * t
        xs = r * x
        if (ts < src.t_span[0] - tol or ts > src.t_span[1] + tol
                or np.max(np.abs(xs)) > src.extent + tol
                or (src.half_space and np.min(xs[-1]) < -tol)):
            raise GridError(f"rescaled point (t={ts:.6g}) lies outside the source cylinder")
        ts = min(max(ts, src.t_span[0]), src.t_span[1])
        pts = np.concatenate([np.full((1,) + target.shape, ts), np.clip(xs, -src.extent, src.extent)])
        vals = interp(np.moveaxis(pts, 0, -1)) / (r * rho)
        levels.append(Field(target, vals, float(t)))
    return SpaceTimeSolution(target, tuple(levels))


# --------------------------------------------------------------------------
# discrete comparison


@dataclass(frozen=True)
class ComparisonResult:
    min_gap: float
    holds: bool
    tolerance: float


def check_comparison(lower: ProblemSpec, upper: ProblemSpec, tolerance: float = 1e-10,
                     **solve_kw) -> ComparisonResult:
    """Solve both problems on one grid and test ``u_upper >= u_lower`` at every stored level."""
    if lower.grid != upper.grid:
        raise ValueError("comparison requires identical grids")
    lo = solve(lower, **solve_kw).solution.array
    hi = solve(upper, **solve_kw).solution.array
    gap = float(np.min(hi - lo))
    return ComparisonResult(gap, gap >= -tolerance, tolerance)
