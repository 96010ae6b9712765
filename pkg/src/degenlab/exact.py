"""Closed-form solutions, residual oracle and the flat-boundary barrier."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import coefficients as co
from .errors import BarrierSearchError, SingularityError


class ExactJet(NamedTuple):
    value: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray | None
    ut: np.ndarray


def plaplace_constant(n: int, p: float) -> float:
    """``n (p')^(p-1)``: the time speed of ``|x|^{p'} + c t``."""
    pc = p / (p - 1.0)
    return n * pc ** (p - 1.0)


def fully_nonlinear_constant(n: int, gamma: float) -> float:
    k = 1.0 / (1.0 + gamma)
    return (1.0 + k) ** (1.0 + gamma) * (n - 1.0 + k)


@dataclass(frozen=True, eq=False)
class ExactSolution:
    """``u(x, t) = |x - center|^k + c (t - t_offset) + constant``.

    ``family`` is ``"plaplace"`` (``k = p'``, ``c = n (p')^(p-1)``) or
    ``"fully_nonlinear"`` (``k = 1 + 1/(1+gamma)``, ``c = C(n, gamma)``, a
    solution for ``F = tr``).
    """

    family: str
    n: int
    p: float | None = None
    gamma: float | None = None
    center: tuple = ()
    t_offset: float = 0.0
    constant: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.family == co.PLAPLACE:
            if self.p is None or self.p <= 2:
                raise ValueError("p-Laplace exact solution requires p > 2")
        elif self.family == co.FULLY_NONLINEAR:
            if self.gamma is None or self.gamma <= 0:
                raise ValueError("fully nonlinear exact solution requires gamma > 0")
        else:
            raise ValueError(f"no exact solution for family {self.family!r}")
        c = tuple(float(v) for v in self.center) or (0.0,) * self.n
        if len(c) != self.n:
            raise ValueError("center has the wrong dimension")
        object.__setattr__(self, "center", c)

    @classmethod
    def for_params(cls, params: co.CoefficientParams, n: int, **kw) -> "ExactSolution":
        if params.family == co.PLAPLACE:
            return cls(co.PLAPLACE, n, p=params.p, **kw)
        if params.family == co.FULLY_NONLINEAR:
            return cls(co.FULLY_NONLINEAR, n, gamma=params.gamma, **kw)
        raise ValueError(f"no exact solution for family {params.family!r}")

    @property
    def exponent(self) -> float:
        if self.family == co.PLAPLACE:
            return self.p / (self.p - 1.0)
        return 1.0 + 1.0 / (1.0 + self.gamma)

    @property
    def speed(self) -> float:
        if self.family == co.PLAPLACE:
            return plaplace_constant(self.n, self.p)
        return fully_nonlinear_constant(self.n, self.gamma)

    def __call__(self, x, t):
        x = np.asarray(x, dtype=np.float64)
        y = x - np.reshape(self.center, (self.n,) + (1,) * (x.ndim - 1))
        r = np.sqrt(np.sum(y * y, axis=0))
        return r**self.exponent + self.speed * (t - self.t_offset) + self.constant

    def evaluate(self, x, t, hessian: bool = True) -> ExactJet:
        return evaluate_exact(self, x, t, hessian)


def evaluate_exact(sol: ExactSolution, x, t, hessian: bool = True) -> ExactJet:
    """Value, gradient, Hessian and time derivative at ``x`` (shape ``(n, ...)``)."""
    x = np.asarray(x, dtype=np.float64)
    y = x - np.reshape(sol.center, (sol.n,) + (1,) * (x.ndim - 1))
    r = np.sqrt(np.sum(y * y, axis=0))
    k = sol.exponent
    value = r**k + sol.speed * (np.asarray(t) - sol.t_offset) + sol.constant
    r_safe = np.where(r == 0, 1.0, r)
    grad = np.where(r == 0, 0.0, k * r_safe ** (k - 2.0)) * y
    ut = np.broadcast_to(np.float64(sol.speed), r.shape).copy()
    H = None
    if hessian:
        if np.any(r == 0):
            raise SingularityError("Hessian of |x|^k is singular at the center")
        yhat = y / r
        I = np.eye(sol.n).reshape((sol.n, sol.n) + (1,) * r.ndim)
        H = k * r ** (k - 2.0) * (I + (k - 2.0) * yhat[:, None] * yhat[None, :])
    return ExactJet(value, grad, H, ut)


def residual_oracle(sol, params: co.CoefficientParams, x, t) -> np.ndarray:
    """``u_t - (regularized principal part)`` from analytic derivatives.

    ``sol`` is anything with an ``evaluate(x, t)`` returning an ExactJet.
    """
    jet = sol.evaluate(x, t)
    return jet.ut - co.principal_part(params, jet.gradient, jet.hessian)


# --------------------------------------------------------------------------
# boundary data with derivatives


@dataclass(frozen=True, eq=False)
class Datum:
    """Twice differentiable function of ``(x, t)``.

    Missing derivative callables fall back to central differences.
    """

    value: Callable
    gradient: Callable | None = None
    hessian: Callable | None = None
    time_derivative: Callable | None = None
    fd_step: float = 1e-4

    def __call__(self, x, t):
        return self.value(x, t)

    def grad(self, x, t):
        if self.gradient is not None:
            return np.asarray(self.gradient(x, t), dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        h = self.fd_step
        out = []
        for i in range(x.shape[0]):
            e = np.zeros_like(x)
            e[i] = h
            out.append((self.value(x + e, t) - self.value(x - e, t)) / (2 * h))
        return np.stack(out)

    def hess(self, x, t):
        if self.hessian is not None:
            return np.asarray(self.hessian(x, t), dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        h = self.fd_step
        n = x.shape[0]
        f0 = np.asarray(self.value(x, t), dtype=np.float64)
        H = np.empty((n, n) + f0.shape)
        for i, j in itertools.product(range(n), repeat=2):
            if j < i:
                continue
            ei = np.zeros_like(x)
            ej = np.zeros_like(x)
            ei[i] = h
            ej[j] = h
            H[i, j] = H[j, i] = (self.value(x + ei + ej, t) - self.value(x + ei - ej, t)
                                 - self.value(x - ei + ej, t) + self.value(x - ei - ej, t)) / (4 * h * h)
        return H

    def dt(self, x, t):
        if self.time_derivative is not None:
            return np.asarray(self.time_derivative(x, t), dtype=np.float64)
        h = self.fd_step
        return (np.asarray(self.value(x, t + h)) - np.asarray(self.value(x, t - h))) / (2 * h)


def affine_datum(coeffs, speed: float = 0.0, constant: float = 0.0) -> Datum:
    """``phi(x, t) = coeffs . x + speed t + constant`` with exact derivatives."""
    c = np.asarray(coeffs, dtype=np.float64)
    n = c.size

    def value(x, t):
        x = np.asarray(x, dtype=np.float64)
        return np.tensordot(c, x, axes=1) + speed * t + constant

    def gradient(x, t):
        x = np.asarray(x, dtype=np.float64)
        return np.broadcast_to(c.reshape((n,) + (1,) * (x.ndim - 1)), x.shape).copy()

    def hessian(x, t):
        x = np.asarray(x, dtype=np.float64)
        return np.zeros((n, n) + x.shape[1:])

    def time_derivative(x, t):
        return np.full(np.asarray(x).shape[1:], float(speed))

    return Datum(value, gradient, hessian, time_derivative)


# --------------------------------------------------------------------------
# barrier


@dataclass(frozen=True, eq=False)
class Barrier:
    """``v(x, t) = A (1 - |x + e_n|^(-beta)) - A t + phi(x, t)``."""

    A: float
    beta: float
    phi: Datum

    def __post_init__(self):
        if not (self.A > 0 and self.beta > 0):
            raise ValueError("barrier needs A > 0 and beta > 0")

    def evaluate(self, x, t):
        """Value, gradient, Hessian and time derivative of ``v``."""
        x = np.asarray(x, dtype=np.float64)
        n = x.shape[0]
        y = x.copy()
        y[-1] = y[-1] + 1.0
        r = np.sqrt(np.sum(y * y, axis=0))
        A, b = self.A, self.beta
        value = A * (1.0 - r ** (-b)) - A * t + self.phi(x, t)
        grad = b * A * r ** (-b - 2.0) * y + self.phi.grad(x, t)
        I = np.eye(n).reshape((n, n) + (1,) * r.ndim)
        H = (b * A * r ** (-b - 2.0) * I
             - b * (b + 2.0) * A * r ** (-b - 4.0) * y[:, None] * y[None, :]
             + self.phi.hess(x, t))
        vt = -A + self.phi.dt(x, t)
        return value, grad, H, vt


@dataclass(frozen=True)
class BarrierReport:
    min_supersolution_defect: float
    worst_point: tuple
    min_flat_margin: float
    min_lateral_margin: float
    tolerance: float

    @property
    def supersolution_ok(self) -> bool:
        return self.min_supersolution_defect >= -self.tolerance

    @property
    def flat_ok(self) -> bool:
        return self.min_flat_margin >= -self.tolerance

    @property
    def lateral_ok(self) -> bool:
        return self.min_lateral_margin >= -self.tolerance

    @property
    def passed(self) -> bool:
        return self.supersolution_ok and self.flat_ok and self.lateral_ok

    @property
    def failing_condition(self) -> str | None:
        for name, ok in (("supersolution", self.supersolution_ok),
                         ("flat boundary", self.flat_ok),
                         ("lateral/bottom boundary", self.lateral_ok)):
            if not ok:
                return name
        return None


@dataclass(frozen=True, eq=False)
class HalfCylinderSample:
    """Uniform node set on the closed half cube ``[-1,1]^{n-1} x [0,1] x [-1,0]``."""

    dim: int = 2
    h: float = 1.0 / 64
    dt: float = 1.0 / 64

    def points(self):
        m = int(round(1.0 / self.h))
        axes = [np.arange(-m, m + 1) * self.h for _ in range(self.dim - 1)]
        axes.append(np.arange(0, m + 1) * self.h)
        x = np.stack(np.meshgrid(*axes, indexing="ij"))
        nt = int(round(1.0 / self.dt))
        times = -1.0 + np.arange(nt + 1) * self.dt
        return x, times


def verify_barrier(b: Barrier, params: co.CoefficientParams, bound_u: float,
                   sample: HalfCylinderSample | None = None,
                   tolerance: float = 1e-8) -> BarrierReport:
    """Check supersolution property and both boundary inequalities on a sample."""
    sample = sample or HalfCylinderSample()
    x, times = sample.points()
    flat = np.isclose(x[-1], 0.0)
    lateral = np.zeros(x.shape[1:], dtype=bool)
    for i in range(x.shape[0]):
        lateral |= np.isclose(np.abs(x[i]), 1.0)
    lateral &= ~flat
    min_def, worst = math.inf, ()
    min_flat = min_lat = math.inf
    for t in times:
        v, Dv, D2v, vt = b.evaluate(x, t)
        defect = vt - co.principal_part(params, Dv, D2v)
        i = int(np.argmin(defect))
        if defect.flat[i] < min_def:
            min_def = float(defect.flat[i])
            worst = tuple(float(c) for c in x.reshape(x.shape[0], -1)[:, i]) + (float(t),)
        phi = b.phi(x, t)
        min_flat = min(min_flat, float(np.min((v - phi)[flat])))
        side = lateral if t > times[0] else ~flat
        min_lat = min(min_lat, float(np.min(v[side] - bound_u)))
    return BarrierReport(min_def, worst, min_flat, min_lat, tolerance)


def build_barrier(phi: Datum, params: co.CoefficientParams, bound_u: float,
                  sample: HalfCylinderSample | None = None, tolerance: float = 1e-8,
                  beta_cap: float = 2.0**10, A_cap: float = 2.0**20,
                  trace: list | None = None) -> Barrier:
    """Doubling search: increase ``beta`` until the radial part is concave enough,
    then double ``A`` until the sampled checks pass.

    Every attempted ``(beta, A, report)`` is appended to ``trace`` if given.
    """
    sample = sample or HalfCylinderSample()
    ell = co.ellipticity_of(params)
    n = sample.dim
    last = None
    beta = 1.0
    while beta <= beta_cap:
        # radial eigenvalue must dominate the n-1 tangential ones
        if ell.lam * (beta + 1.0) > ell.Lam * (n - 1):
            A = 1.0
            while A <= A_cap:
                cand = Barrier(A, beta, phi)
                rep = verify_barrier(cand, params, bound_u, sample, tolerance)
                if trace is not None:
                    trace.append((beta, A, rep))
                last = rep
                if rep.passed:
                    return cand
                A *= 2.0
        beta *= 2.0
    raise BarrierSearchError(
        "no barrier verified within caps",
        failing_condition=last.failing_condition if last else "beta range empty")
