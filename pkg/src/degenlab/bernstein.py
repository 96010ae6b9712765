"""Checks of the Bernstein argument for the uniform time-derivative bound.

Pointwise inequalities are tested on jets; the auxiliary function
``v = eta^2 u_t^2 + delta A (eps^2 + |Du|^2)^((2-beta)/2)`` and its
linearized defect are evaluated on discrete solutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import expit

from . import coefficients as co
from .core import Field, Jet, SpaceTimeSolution, gradient_array, hessian_array
from .errors import DeltaSweepError

CS_SLACK = 1e-12


# --------------------------------------------------------------------------
# exponent bookkeeping


def select_beta(family: str, value: float) -> float:
    """``max(3 - p, 0)`` for p-Laplace, ``max(1 - gamma, 0)`` otherwise."""
    if family == co.PLAPLACE:
        if not value > 2:
            raise ValueError("p-Laplace family requires p > 2")
        return max(3.0 - value, 0.0)
    if family in (co.FULLY_NONLINEAR, co.GENERAL_QUASILINEAR):
        if not value > 0:
            raise ValueError("gamma must be positive")
        return max(1.0 - value, 0.0)
    raise ValueError(f"unknown family {family!r}")


@dataclass(frozen=True)
class DominationResult:
    holds: bool
    margin: float
    lhs: Fraction
    rhs: Fraction
    terms: tuple
    identity_holds: bool


def _domination_sides(family: str, v: Fraction, b: Fraction):
    half = Fraction(1, 2)
    if family == co.PLAPLACE:
        lhs = (v - b - 2) * half
        terms = (v - 2, 3 * (v - 2) * half, (2 * v - 5) * half)
        claimed = (2 * v - 5) * half
    elif family == co.FULLY_NONLINEAR:
        lhs = -(v + b) * half
        terms = (Fraction(0), v * half, -half)
        claimed = -half
    elif family == co.GENERAL_QUASILINEAR:
        # multiplier exponent gamma/2 plays the role of (p-2)/2
        lhs = (v - b) * half
        terms = (v, 3 * v * half, (2 * v - 1) * half)
        claimed = (2 * v - 1) * half
    else:
        raise ValueError(f"unknown family {family!r}")
    return lhs, terms, claimed


def check_domination(family: str, value: float, beta: float) -> DominationResult:
    """Exponent comparison of the bad term against the good term, in exact arithmetic.

    ``value`` is ``p`` for the p-Laplace family and ``gamma`` otherwise.
    Floats are converted to their exact binary rationals, so the claimed
    minimum is verified exactly rather than to rounding.
    """
    v, b = Fraction(value), Fraction(beta)
    lhs, terms, claimed = _domination_sides(family, v, b)
    rhs = min(terms)
    return DominationResult(lhs <= rhs, float(rhs - lhs), lhs, rhs, terms, rhs == claimed)


# --------------------------------------------------------------------------
# jet inequalities


@dataclass(frozen=True)
class JetCheck:
    holds: bool
    lhs: float
    rhs: float


def _cs_sides(q, M, xi, eps):
    """``((xi^T M q)^2, (eps^2+|q|^2)|M xi|^2)`` for components-first batches."""
    Mq = np.einsum("ij...,j...->i...", M, q)
    Mxi = np.einsum("ij...,j...->i...", M, xi)
    lhs = np.sum(xi * Mq, axis=0) ** 2
    rhs = (eps**2 + np.sum(q * q, axis=0)) * np.sum(Mxi * Mxi, axis=0)
    return lhs, rhs


def _within(lhs, rhs, slack=CS_SLACK):
    return lhs <= rhs * (1.0 + slack) + 1e-300


def jet_cauchy_schwarz(jet: Jet, epsilon: float, xi) -> JetCheck:
    """``(xi^T M q)^2 <= (eps^2 + |q|^2) |M xi|^2``."""
    lhs, rhs = _cs_sides(jet.q, jet.M, np.asarray(xi, dtype=np.float64), epsilon)
    return JetCheck(bool(_within(lhs, rhs)), float(lhs), float(rhs))


def _ut_bound_sides(params: co.CoefficientParams, q, M):
    tau = co.principal_part(params, q, M)
    n = q.shape[0]
    if params.is_quasilinear:
        Lam = co.ellipticity_of(params).Lam
        s = params.epsilon**2 + np.sum(q * q, axis=0)
        fro = np.sqrt(np.sum(M * M, axis=(0, 1)))
        bound = math.sqrt(n) * Lam * s**params.multiplier_exponent * fro
    else:
        Lam = params.F.ellipticity.Lam
        opn = np.max(np.abs(np.linalg.eigvalsh(np.moveaxis(np.moveaxis(M, 0, -1), 0, -1))), axis=-1)
        bound = n * Lam * co.degenerate_multiplier(params, q) * opn
    return tau, bound


def jet_ut_bound(jet: Jet, params: co.CoefficientParams) -> JetCheck:
    """``|u_t|`` against ``sqrt(n) Lambda_p s^e ||M||_F`` (quasilinear) or
    ``n Lambda s^(gamma/2) ||M||_2`` (fully nonlinear), with ``u_t`` the
    equation value at the jet.
    """
    tau, bound = _ut_bound_sides(params, jet.q, jet.M)
    tau = float(tau)
    if jet.tau is not None and abs(jet.tau - tau) > 1e-12 * max(1.0, abs(tau)):
        raise ValueError(f"jet.tau = {jet.tau} is inconsistent with the equation value {tau}")
    return JetCheck(bool(_within(abs(tau), float(bound))), abs(tau), float(bound))


@dataclass(frozen=True)
class FuzzReport:
    family: str
    value: float
    samples: int
    adversarial: int
    cs_violations: int
    ut_violations: int
    worst_cs_ratio: float
    worst_ut_ratio: float

    @property
    def passed(self) -> bool:
        return self.cs_violations == 0 and self.ut_violations == 0


def random_jets(rng: np.random.Generator, count: int, dim: int = 2, adversarial: int = 0):
    """Uniform ``[-1, 1]`` jets plus aligned rank-one configurations.

    Returns ``(q, M, xi, eps)`` in components-first layout.  The last
    ``adversarial`` samples have ``M = c w w^T``, ``q`` and ``xi`` parallel to
    ``w`` and ``eps = 0``: the Cauchy-Schwarz equality case.
    """
    q = rng.uniform(-1, 1, (dim, count))
    B = rng.uniform(-1, 1, (dim, dim, count))
    M = 0.5 * (B + np.swapaxes(B, 0, 1))
    xi = rng.uniform(-1, 1, (dim, count))
    eps = rng.uniform(0, 1, count)
    if adversarial:
        a = slice(count - adversarial, count)
        w = rng.normal(size=(dim, adversarial))
        w /= np.linalg.norm(w, axis=0)
        c = rng.uniform(-1, 1, adversarial)
        M[:, :, a] = c * (w[:, None] * w[None, :])
        q[:, a] = rng.uniform(-1, 1, adversarial) * w
        xi[:, a] = rng.uniform(-1, 1, adversarial) * w
        eps[a] = 0.0
    return q, M, xi, eps


def jet_fuzz(params: co.CoefficientParams, count: int, rng: np.random.Generator,
             dim: int = 2, adversarial_fraction: float = 0.1) -> FuzzReport:
    """Vectorized fuzz of both jet inequalities.

    ``params.epsilon`` is ignored in favour of the per-sample ``eps``; the
    equation value is recomputed from the jet rather than drawn.
    """
    n_adv = int(round(count * adversarial_fraction))
    q, M, xi, eps = random_jets(rng, count, dim, n_adv)
    cs_l, cs_r = _cs_sides(q, M, xi, eps)
    cs_bad = ~_within(cs_l, cs_r)
    s = eps**2 + np.sum(q * q, axis=0)
    if params.is_quasilinear:
        e = params.multiplier_exponent
        outer = q[:, None] * q[None, :] / np.where(s == 0, 1.0, s)
        a = np.eye(dim)[:, :, None] + (params.p - 2.0) * outer
        mult = np.where(s == 0, 0.0 if e > 0 else 1.0, np.where(s == 0, 1.0, s) ** e)
        tau = mult * np.einsum("ij...,ij...->...", a, M)
        fro = np.sqrt(np.sum(M * M, axis=(0, 1)))
        bound = math.sqrt(dim) * co.ellipticity_of(params).Lam * mult * fro
    else:
        mult = np.where(s == 0, 0.0, s) ** (params.gamma / 2.0)
        tau = mult * co.evaluate_F(params.F, M)
        opn = np.max(np.abs(np.linalg.eigvalsh(np.moveaxis(np.moveaxis(M, 0, -1), 0, -1))), axis=-1)
        bound = dim * params.F.ellipticity.Lam * mult * opn
    tau = np.abs(tau)
    ut_bad = ~_within(tau, bound)
    with np.errstate(divide="ignore", invalid="ignore"):
        ut_ratio = np.where(bound > 0, tau / bound, 0.0)
        cs_ratio = np.where(cs_r > 0, cs_l / cs_r, 0.0)
    value = params.p if params.family == co.PLAPLACE else params.gamma
    return FuzzReport(params.family, float(value), count, n_adv, int(cs_bad.sum()), int(ut_bad.sum()),
                      float(cs_ratio.max()), float(ut_ratio.max()))


# --------------------------------------------------------------------------
# cutoff


def _step_down(z):
    """Smooth step: 1 for ``z <= 0``, 0 for ``z >= 1``, with first and second derivatives."""
    z = np.asarray(z, dtype=np.float64)
    mid = (z > 0) & (z < 1)
    zc = np.clip(z, 1e-3, 1 - 1e-3)
    g = -1.0 / zc + 1.0 / (1.0 - zc)
    g1 = 1.0 / zc**2 + 1.0 / (1.0 - zc) ** 2
    g2 = -2.0 / zc**3 + 2.0 / (1.0 - zc) ** 3
    S = expit(-g)
    S1 = -S * expit(g) * g1
    S2 = -S1 * (1.0 - 2.0 * S) * g1 - S * expit(g) * g2
    val = np.where(z <= 0, 1.0, np.where(mid, S, 0.0))
    return val, np.where(mid, S1, 0.0), np.where(mid, S2, 0.0)


@dataclass(frozen=True)
class Cutoff:
    """Product of smooth 1-D steps: ``eta = 1`` on ``Q_inner``, ``0`` outside ``Q_outer``.

    In space each coordinate contributes ``S((|x_i| - inner)/(outer - inner))``;
    in time ``S((-t - t_inner)/(t_outer - t_inner))`` with ``t_inner = inner^2``
    and ``t_outer = outer^2``.  Since only ``|x_n|`` enters, the same profile
    serves the half cube: it equals one near ``x_n = 0``.
    """

    inner: float = 0.5
    outer: float = 0.95
    half_space: bool = False

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise ValueError("need 0 < inner < outer")

    def evaluate(self, x, t):
        """``(eta, eta_t, D eta, D^2 eta)`` at points ``x`` (shape ``(n, ...)``)."""
        x = np.asarray(x, dtype=np.float64)
        n = x.shape[0]
        w = self.outer - self.inner
        ax = np.abs(x)
        sgn = np.sign(x)
        b, b1, b2 = _step_down((ax - self.inner) / w)
        b1 = b1 * sgn / w
        b2 = b2 / w**2
        ti, to = self.inner**2, self.outer**2
        T, T1, _ = _step_down((-np.asarray(t, dtype=np.float64) - ti) / (to - ti))
        T1 = -T1 / (to - ti)
        prod = np.prod(b, axis=0)
        eta = T * prod
        eta_t = T1 * prod
        D = np.empty_like(x)
        H = np.empty((n, n) + x.shape[1:])
        for i in range(n):
            others = np.prod(np.delete(b, i, axis=0), axis=0) if n > 1 else 1.0
            D[i] = T * b1[i] * others
            H[i, i] = T * b2[i] * others
            for j in range(i + 1, n):
                rest = np.prod(np.delete(b, [i, j], axis=0), axis=0) if n > 2 else 1.0
                H[i, j] = H[j, i] = T * b1[i] * b1[j] * rest
        return eta, eta_t, D, H


# --------------------------------------------------------------------------
# auxiliary function and defect


@dataclass(frozen=True)
class BernsteinConfig:
    delta: float
    beta: float
    cutoff: Cutoff = field(default_factory=Cutoff)
    A: float = 0.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0 <= self.beta < 1:
            raise ValueError("beta must lie in [0, 1)")
        if self.A < 0:
            raise ValueError("A must be nonnegative")

    @classmethod
    def from_solution(cls, solution: SpaceTimeSolution, delta: float, beta: float,
                      cutoff: Cutoff | None = None) -> "BernsteinConfig":
        """``A = sup |eta u_t|`` over the run."""
        cutoff = cutoff or Cutoff(half_space=solution.grid.half_space)
        A = 0.0
        for ut, _, eta in _ut_grad_eta(solution, cutoff):
            A = max(A, float(np.max(np.abs(eta * ut))))
        return cls(delta, beta, cutoff, A)

    def with_delta(self, delta: float) -> "BernsteinConfig":
        return BernsteinConfig(delta, self.beta, self.cutoff, self.A)


def _ut_grad_eta(solution: SpaceTimeSolution, cutoff: Cutoff):
    grid = solution.grid
    x = grid.coords()
    if grid.nt < 1:
        raise ValueError("need at least two time levels")
    for k in range(1, grid.nt + 1):
        a, b = solution.levels[k - 1].values, solution.levels[k].values
        ut = (b - a) / grid.dt
        g = gradient_array(b, grid.h)
        eta = cutoff.evaluate(x, solution.levels[k].t)[0]
        yield ut, g, eta


def auxiliary_v(solution: SpaceTimeSolution, config: BernsteinConfig,
                params: co.CoefficientParams) -> tuple[Field, ...]:
    """``v`` at levels ``1 .. nt`` (the backward difference needs one earlier level)."""
    grid = solution.grid
    out = []
    for k, (ut, g, eta) in enumerate(_ut_grad_eta(solution, config.cutoff), start=1):
        s = params.epsilon**2 + np.sum(g * g, axis=0)
        v = eta**2 * ut**2 + config.delta * config.A * s ** ((2.0 - config.beta) / 2.0)
        out.append(Field(grid, v, solution.levels[k].t))
    return tuple(out)


def linearized_operator(params: co.CoefficientParams, Du, D2u, w_grad, w_hess):
    """``L w`` for the linearization of the regularized equation at ``u``."""
    if params.is_quasilinear:
        a = co.a_tensor(params, Du)
        da = co.a_tensor_gradient(params, Du)
        return (np.einsum("ij...,ij...->...", a, w_hess)
                + np.einsum("ijl...,ij...,l...->...", da, D2u, w_grad))
    s = params.epsilon**2 + np.sum(Du * Du, axis=0)
    g = params.gamma
    m = s ** (g / 2.0)
    dF = co.F_gradient(params.F, D2u)
    Fv = co.evaluate_F(params.F, D2u)
    return (m * np.einsum("ij...,ij...->...", dF, w_hess)
            + g * s ** (g / 2.0 - 1.0) * Fv * np.sum(Du * w_grad, axis=0))


@dataclass(frozen=True)
class DefectReport:
    delta: float
    beta: float
    A: float
    max_v: float
    argmax: tuple
    location: tuple
    eta_at_max: float
    ut_at_max: float
    on_cutoff_zero_set: bool
    ut_small: bool
    on_flat_boundary: bool
    zero_set_gap: float
    gradient_factor: float
    boundary_term: float
    bound: float
    max_defect: float
    positive_defect_fraction: float
    skipped_nodes: int

    @property
    def dichotomy(self) -> bool:
        return self.on_cutoff_zero_set or self.ut_small or self.on_flat_boundary

    @property
    def verdict(self) -> bool:
        return self.dichotomy and self.A <= self.bound

    @property
    def margin(self) -> float:
        return min(self.bound - self.A, 0.0 if self.dichotomy else self.zero_set_gap)


def defect_report(solution: SpaceTimeSolution, config: BernsteinConfig,
                  params: co.CoefficientParams, ut_tol: float | None = None,
                  eta_tol: float = 1e-12, boundary_term: float = 0.0) -> DefectReport:
    """Locate ``max v`` and test the conclusion ``A <= 2 delta``.

    The maximum of ``v`` must sit where ``eta = 0``, where ``|u_t|`` is below
    ``ut_tol`` or (half cube) on ``x_n = 0``.  At such a point ``v`` is at most
    ``delta A g`` with ``g = (eps^2+|Du|^2)^((2-beta)/2)``, so ``A^2 <= delta A g``
    and the bound is ``2 delta max(1, max g / 2) + boundary_term``.  The
    discrete ``v_t - L v`` is reported at interior nodes but not asserted.
    """
    grid = solution.grid
    if grid.nt < 2:
        raise ValueError("need at least three time levels")
    x = grid.coords()
    h = grid.h
    vs = auxiliary_v(solution, config, params)
    V = np.stack([f.values for f in vs])
    ut_all = np.stack([ut for ut, _, _ in _ut_grad_eta(solution, config.cutoff)])
    if ut_tol is None:
        ut_tol = 1e-6 * (1.0 + float(np.max(np.abs(ut_all))))
    flat_idx = np.unravel_index(int(np.argmax(V)), V.shape)
    k = int(flat_idx[0])
    node = tuple(int(i) for i in flat_idx[1:])
    t_max = vs[k].t
    pt = x[(slice(None),) + node]
    eta_max = float(config.cutoff.evaluate(pt.reshape(-1, 1), t_max)[0][0])
    ut_max = float(ut_all[(k,) + node])
    on_flat = bool(grid.half_space and abs(pt[-1]) < 1e-12)
    etas = np.stack([config.cutoff.evaluate(x, f.t)[0] for f in vs])
    zero = etas <= eta_tol
    zero_gap = float(np.max(V[zero]) - V.max()) if zero.any() else -math.inf

    gmax = 0.0
    defects = []
    inner = (slice(1, -1),) * grid.dim
    for kk in range(1, len(vs)):
        u = solution.levels[kk + 1].values
        Du = gradient_array(u, h)
        D2u = hessian_array(u, h)
        s = params.epsilon**2 + np.sum(Du * Du, axis=0)
        gmax = max(gmax, float(np.max(s ** ((2.0 - config.beta) / 2.0))))
        v = V[kk]
        vt = (V[kk] - V[kk - 1]) / grid.dt
        Lv = linearized_operator(params, Du, D2u, gradient_array(v, h), hessian_array(v, h))
        defects.append((vt - Lv)[inner])
    s0 = params.epsilon**2 + np.sum(gradient_array(solution.levels[1].values, h) ** 2, axis=0)
    gmax = max(gmax, float(np.max(s0 ** ((2.0 - config.beta) / 2.0))))
    D = np.stack(defects)
    skipped = (V.shape[0] - 1) * (grid.size - D[0].size) + grid.size
    bound = 2.0 * config.delta * max(1.0, gmax / 2.0) + boundary_term
    return DefectReport(
        delta=config.delta, beta=config.beta, A=config.A, max_v=float(V.max()),
        argmax=(k + 1,) + node, location=tuple(float(c) for c in pt) + (float(t_max),),
        eta_at_max=eta_max, ut_at_max=ut_max, on_cutoff_zero_set=eta_max <= eta_tol,
        ut_small=abs(ut_max) <= ut_tol, on_flat_boundary=on_flat, zero_set_gap=zero_gap,
        gradient_factor=gmax, boundary_term=boundary_term, bound=bound,
        max_defect=float(D.max()), positive_defect_fraction=float(np.mean(D > 0)),
        skipped_nodes=int(skipped))


@dataclass(frozen=True)
class DeltaSweepResult:
    delta: float
    report: DefectReport
    trace: tuple


def default_delta_ladder() -> list[float]:
    return [2.0**k for k in range(-6, 11)]


def delta_sweep(solution: SpaceTimeSolution, params: co.CoefficientParams,
                ladder=None, beta: float | None = None, cutoff: Cutoff | None = None,
                **report_kw) -> DeltaSweepResult:
    """Smallest ``delta`` in an increasing ladder whose defect report passes."""
    ladder = [float(d) for d in (ladder or default_delta_ladder())]
    if any(a >= b for a, b in zip(ladder, ladder[1:])):
        raise ValueError("delta ladder must be strictly increasing")
    if beta is None:
        value = params.p if params.family == co.PLAPLACE else params.gamma
        beta = select_beta(params.family, value)
    base = BernsteinConfig.from_solution(solution, ladder[0], beta, cutoff)
    trace = []
    for d in ladder:
        rep = defect_report(solution, base.with_delta(d), params, **report_kw)
        trace.append((d, rep.margin, rep.verdict))
        if rep.verdict:
            return DeltaSweepResult(d, rep, tuple(trace))
    best = max(m for _, m, _ in trace)
    raise DeltaSweepError(f"no delta in the ladder passed (best margin {best:.6g})", best_margin=best)
