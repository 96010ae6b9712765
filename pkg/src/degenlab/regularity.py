"""Hölder/Lipschitz exponent fits and the exponent algebra of intrinsic scaling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .core import Field, SpaceTimeSolution, cylinder_mask, gradient_array, in_time_window
from .errors import FitError, GridError

MIN_PAIRS = 8
_ZERO_REL = 1e-12


def scaling_exponents(alpha: float, p: float) -> tuple[float, float]:
    """``mu = alpha / d`` and ``nu = (1 + alpha) / d`` with ``d = 2 + alpha (2 - p)``."""
    d = 2.0 + alpha * (2.0 - p)
    if not d > 0:
        raise ValueError(f"2 + alpha(2 - p) = {d} must be positive")
    return alpha / d, (1.0 + alpha) / d


def mixed_time_exponent(alpha: float, beta: float) -> float:
    """Time exponent ``alpha beta / (1 + alpha)`` of the gradient."""
    if not (0 < alpha <= 1 and 0 < beta <= 1):
        raise ValueError("alpha and beta must lie in (0, 1]")
    return alpha * beta / (1.0 + alpha)


@dataclass(frozen=True)
class ExponentReport:
    fitted_exponent: float
    fitted_constant: float
    r_squared: float
    predicted_exponent: float | None
    pair_count: int

    def __post_init__(self):
        if self.pair_count < MIN_PAIRS:
            raise FitError(f"only {self.pair_count} usable pairs (need {MIN_PAIRS})")
        if not math.isfinite(self.fitted_exponent):
            raise FitError("fitted exponent is not finite")

    @property
    def deviation(self) -> float | None:
        if self.predicted_exponent is None:
            return None
        return abs(self.fitted_exponent - self.predicted_exponent)


def _loglog_fit(dist: np.ndarray, diff: np.ndarray, predicted, scale: float) -> ExponentReport:
    keep = diff > _ZERO_REL * max(scale, 1e-300)
    d, f = dist[keep], diff[keep]
    if d.size < MIN_PAIRS or np.unique(d).size < 2:
        raise FitError(f"only {d.size} usable pairs (need {MIN_PAIRS} over at least two scales)")
    X, Y = np.log(d), np.log(f)
    slope, icpt = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + icpt)
    ss_tot = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return ExponentReport(float(slope), float(math.exp(icpt)), r2, predicted, int(d.size))


_DIRECTIONS = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]


def radius_ladder(h: float, r_max: float, factor: float = math.sqrt(2.0),
                  r_min_cells: float = 4.0) -> np.ndarray:
    """Geometric radii ``4h, 4h f, 4h f^2, ... <= r_max``."""
    r0 = r_min_cells * h
    if r0 > r_max:
        return np.empty(0)
    k = int(math.floor(math.log(r_max / r0) / math.log(factor) + 1e-12))
    return r0 * factor ** np.arange(k + 1)


def fit_spatial_holder(gradient_field: Field, center=None, radii: Sequence[float] | None = None,
                       predicted: float | None = None) -> ExponentReport:
    """Slope of ``log |Du(x) - Du(center)|`` against ``log |x - center|``.

    Samples lie along the coordinate axes and diagonals through ``center``
    (a grid node), at node offsets closest to each radius; the actual node
    distance is used in the fit.  Pairs whose difference is at round-off
    level are discarded.
    """
    grid = gradient_field.grid
    if gradient_field.rank != 1:
        raise ValueError("fit_spatial_holder expects a vector field")
    h = grid.h
    center = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=np.float64)
    idx0 = []
    for i in range(grid.dim):
        ax = grid.axis(i)
        j = int(round((center[i] - ax[0]) / h))
        if not 0 <= j < ax.size or abs(ax[j] - center[i]) > 1e-9 * h:
            raise GridError("center must be a grid node")
        idx0.append(j)
    dirs = [(1,), (-1,)] if grid.dim == 1 else _DIRECTIONS
    if radii is None:
        reach = min(min(j, n - 1 - j) for j, n in zip(idx0, grid.shape)) * h
        radii = radius_ladder(h, reach)
    G = gradient_field.values
    g0 = G[(slice(None),) + tuple(idx0)]
    dist, diff = [], []
    for r in radii:
        for d in dirs:
            d = np.asarray(d)
            m = int(round(r / (h * np.linalg.norm(d))))
            if m == 0:
                continue
            idx = [j + m * di for j, di in zip(idx0, d)]
            if any(not 0 <= k < n for k, n in zip(idx, grid.shape)):
                continue
            dist.append(m * h * float(np.linalg.norm(d)))
            diff.append(float(np.linalg.norm(G[(slice(None),) + tuple(idx)] - g0)))
    scale = float(np.max(np.abs(G))) if G.size else 0.0
    return _loglog_fit(np.array(dist), np.array(diff), predicted, scale)


def _window_levels(solution: SpaceTimeSolution, radius: float) -> list[int]:
    return [k for k, f in enumerate(solution.levels) if in_time_window(f.t, radius)]


def _lag_ladder(max_lag: int, factor: float = math.sqrt(2.0)) -> list[int]:
    lags, x = [], 1.0
    while round(x) <= max_lag:
        if not lags or round(x) != lags[-1]:
            lags.append(int(round(x)))
        x *= factor
    return lags


def fit_time_lipschitz(solution: SpaceTimeSolution, radius: float,
                       predicted: float | None = 1.0) -> ExponentReport:
    """Slope of ``log sup_x |u(x,t) - u(x,s)|`` against ``log |t - s|`` on ``Q_radius``.

    Lags run over a geometric ladder of level counts; the reported constant
    is the largest difference quotient rather than the fit intercept.
    """
    grid = solution.grid
    mask = cylinder_mask(grid, radius)
    ks = _window_levels(solution, radius)
    if len(ks) < 2 or not mask.any():
        raise GridError(f"cylinder of radius {radius} holds fewer than two levels")
    U = solution.array[ks][:, mask]
    lags = _lag_ladder(len(ks) - 1)
    dist, diff = [], []
    for L in lags:
        dist.append(L * grid.dt)
        diff.append(float(np.max(np.abs(U[L:] - U[:-L]))))
    dist, diff = np.array(dist), np.array(diff)
    scale = float(np.max(np.abs(U)))
    rep = _loglog_fit(dist, diff, predicted, scale)
    const = float(np.max(diff / dist))
    return ExponentReport(rep.fitted_exponent, const, rep.r_squared, predicted, rep.pair_count)


@dataclass(frozen=True)
class MixedCheckReport:
    """Diagnostics of the gradient-in-time estimate on sampled triples.

    ``max_ratio`` is ``max |Du(x,t) - Du(x,s)| / |t-s|^{alpha beta/(1+alpha)}``.
    ``max_chain_remainder`` is the largest value of
    ``(l |dDu| - |du(y)| - |du(x)|)_+ / l^{1+alpha}`` with
    ``l = |t-s|^{beta/(1+alpha)}/4`` and ``y`` the probe point; it should stay
    bounded by twice the spatial Hölder seminorm of ``Du``.
    """

    exponent: float
    max_ratio: float
    max_chain_remainder: float
    samples: int
    skipped: int

    @property
    def finite(self) -> bool:
        return math.isfinite(self.max_ratio) and math.isfinite(self.max_chain_remainder)


def mixed_gradient_time_check(solution: SpaceTimeSolution, alpha: float, beta: float,
                              radius: float = 0.5, node_stride: int = 2,
                              zero_tol: float = 1e-9) -> MixedCheckReport:
    """Sample ``(x, t, s)`` on ``Q_radius`` and evaluate the mixed-regularity chain.

    ``x`` runs over every ``node_stride``-th node of the cylinder, ``(t, s)``
    over pairs of window levels separated by a geometric lag ladder.  Probe
    points leaving the grid are skipped and counted; ``u`` at the probe is
    bilinearly interpolated.
    """
    expo = mixed_time_exponent(alpha, beta)
    grid = solution.grid
    ks = _window_levels(solution, radius)
    if len(ks) < 2:
        raise GridError("need at least two levels in the time window")
    mask = cylinder_mask(grid, radius)
    sel = np.zeros_like(mask)
    sl = tuple(slice(None, None, node_stride) for _ in range(grid.dim))
    sel[sl] = mask[sl]
    x = grid.coords()[:, sel]
    axes = [grid.axis(i) for i in range(grid.dim)]
    lo = np.array([a[0] for a in axes])[:, None]
    hi = np.array([a[-1] for a in axes])[:, None]
    grads = {}

    def grad(k):
        if k not in grads:
            grads[k] = gradient_array(solution.levels[k].values, grid.h)[:, sel]
        return grads[k]

    max_ratio = 0.0
    max_rem = 0.0
    samples = skipped = 0
    k_end = ks[-1]
    for L in _lag_ladder(len(ks) - 1):
        kt, ks_ = k_end, k_end - L
        dts = L * grid.dt
        d = grad(kt) - grad(ks_)
        nd = np.sqrt(np.sum(d * d, axis=0))
        max_ratio = max(max_ratio, float(np.max(nd)) / dts**expo)
        moving = nd > zero_tol
        samples += int(sel.sum())
        if not moving.any():
            continue
        l = dts ** (beta / (1.0 + alpha)) / 4.0
        y = x[:, moving] + l * d[:, moving] / nd[moving]
        inside = np.all((y >= lo - 1e-12) & (y <= hi + 1e-12), axis=0)
        skipped += int((~inside).sum())
        if not inside.any():
            continue
        ut = RegularGridInterpolator(axes, solution.levels[kt].values)
        us = RegularGridInterpolator(axes, solution.levels[ks_].values)
        yi = np.moveaxis(y[:, inside], 0, -1)
        xi = np.moveaxis(x[:, moving][:, inside], 0, -1)
        du_y = np.abs(ut(yi) - us(yi))
        du_x = np.abs(ut(xi) - us(xi))
        rem = np.maximum(l * nd[moving][inside] - du_y - du_x, 0.0) / l ** (1.0 + alpha)
        max_rem = max(max_rem, float(np.max(rem)))
    return MixedCheckReport(expo, max_ratio, max_rem, samples, skipped)
