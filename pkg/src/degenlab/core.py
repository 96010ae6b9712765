"""Grids, fields and discrete differential operators.

Array layout convention: a scalar field on a ``dim``-dimensional grid has
shape ``grid.shape``; vector fields put the component axis first, shape
``(dim, *grid.shape)``; matrix fields put both component axes first, shape
``(dim, dim, *grid.shape)``.  Coefficient routines use the same
components-first layout so that fields and pointwise values share code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import GridError

_REL_TOL = 1e-9


def _is_integer_ratio(a: float, b: float) -> bool:
    k = a / b
    return round(k) >= 1 and abs(k - round(k)) <= _REL_TOL * max(1.0, abs(k))


@dataclass(frozen=True)
class Grid:
    """Uniform space-time grid on the cube ``[-extent, extent]^dim``.

    With ``half_space`` the last axis is restricted to ``[0, extent]``.
    Time levels are ``t_span[0] + k * dt`` for ``k = 0 .. nt``.
    """

    dim: int
    extent: float
    h: float
    dt: float
    t_span: tuple[float, float]
    half_space: bool = False

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise GridError(f"dim must be 1 or 2, got {self.dim}")
        if not (self.h > 0 and self.dt > 0):
            raise GridError("h and dt must be positive")
        if not _is_integer_ratio(self.extent, self.h):
            raise GridError(f"extent/h = {self.extent / self.h} is not a positive integer")
        t0, t1 = map(float, self.t_span)
        object.__setattr__(self, "t_span", (t0, t1))
        if not (t0 < t1 <= 1e-14):
            raise GridError(f"t_span must satisfy t_start < t_end <= 0, got {self.t_span}")
        if not _is_integer_ratio(t1 - t0, self.dt):
            raise GridError("t_span width is not a positive multiple of dt")

    @property
    def n_half(self) -> int:
        return int(round(self.extent / self.h))

    @property
    def nt(self) -> int:
        """Number of time steps."""
        return int(round((self.t_span[1] - self.t_span[0]) / self.dt))

    def axis(self, i: int) -> np.ndarray:
        n = self.n_half
        if self.half_space and i == self.dim - 1:
            return np.arange(0, n + 1) * self.h
        return np.arange(-n, n + 1) * self.h

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(self.axis(i)) for i in range(self.dim))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(dim, *shape)``."""
        return np.stack(np.meshgrid(*[self.axis(i) for i in range(self.dim)], indexing="ij"))

    def times(self) -> np.ndarray:
        return self.t_span[0] + np.arange(self.nt + 1) * self.dt

    def time_index(self, t: float) -> int:
        k = (t - self.t_span[0]) / self.dt
        kr = int(round(k))
        if abs(k - kr) > _REL_TOL * max(1.0, abs(k)) or not 0 <= kr <= self.nt:
            raise GridError(f"t = {t} is not a time level of the grid")
        return kr

    def boundary_mask(self) -> np.ndarray:
        """True on nodes of the spatial boundary of the (half-)cube."""
        mask = np.zeros(self.shape, dtype=bool)
        for i in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[i] = 0
            mask[tuple(sl)] = True
            sl[i] = -1
            mask[tuple(sl)] = True
        return mask

    def replace(self, **changes) -> "Grid":
        kw = dict(dim=self.dim, extent=self.extent, h=self.h, dt=self.dt,
                  t_span=self.t_span, half_space=self.half_space)
        kw.update(changes)
        return Grid(**kw)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Field:
    """Values on the nodes of ``grid`` at time ``t``.

    ``values`` has shape ``components + grid.shape`` where ``components`` is
    ``()`` for scalars, ``(dim,)`` for vectors and ``(dim, dim)`` for matrices.
    """

    grid: Grid
    values: np.ndarray
    t: float | None = None

    def __post_init__(self):
        v = _freeze(self.values)
        if v.shape[v.ndim - self.grid.dim:] != self.grid.shape:
            raise GridError(f"value shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise GridError("field contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def rank(self) -> int:
        return self.values.ndim - self.grid.dim


@dataclass(frozen=True, eq=False)
class SpaceTimeSolution:
    """One scalar Field per time level of ``grid``."""

    grid: Grid
    levels: tuple[Field, ...]

    def __post_init__(self):
        levels = tuple(self.levels)
        if len(levels) != self.grid.nt + 1:
            raise GridError(f"expected {self.grid.nt + 1} levels, got {len(levels)}")
        for f in levels:
            if f.grid != self.grid or f.rank != 0:
                raise GridError("every level must be a scalar field on the solution grid")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def from_array(cls, grid: Grid, array: np.ndarray) -> "SpaceTimeSolution":
        times = grid.times()
        return cls(grid, tuple(Field(grid, array[k], float(times[k])) for k in range(len(times))))

    @property
    def array(self) -> np.ndarray:
        return np.stack([f.values for f in self.levels])


@dataclass(frozen=True, eq=False)
class Jet:
    """Pointwise (gradient, Hessian, time derivative) triple."""

    q: np.ndarray
    M: np.ndarray
    tau: float | None = None

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64).reshape(-1)
        M = np.asarray(self.M, dtype=np.float64)
        if M.shape != (q.size, q.size):
            raise ValueError(f"M must be {q.size}x{q.size}, got {M.shape}")
        if not np.array_equal(M, M.T):
            raise ValueError("M must be symmetric exactly as stored")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "M", M)


# --------------------------------------------------------------------------
# operations


def sample(f: Callable, grid: Grid, t: float) -> Field:
    """Evaluate ``f(x, t)`` at every node; ``x`` has shape ``(dim, *shape)``."""
    grid.time_index(t)
    x = grid.coords()
    vals = np.asarray(f(x, t), dtype=np.float64)
    comp = vals.shape[: max(vals.ndim - grid.dim, 0)] if vals.ndim >= grid.dim else ()
    return Field(grid, np.broadcast_to(vals, comp + grid.shape).copy(), float(t))


def sample_solution(f: Callable, grid: Grid) -> SpaceTimeSolution:
    return SpaceTimeSolution(grid, tuple(sample(f, grid, float(t)) for t in grid.times()))


def _check_axes(grid: Grid) -> None:
    if min(grid.shape) < 3:
        raise GridError("at least 3 nodes per axis are required")


def gradient_array(u: np.ndarray, h: float) -> np.ndarray:
    """Central differences inside, one-sided second order on the boundary."""
    if u.ndim == 1:
        return np.gradient(u, h, edge_order=2)[None]
    return np.stack(np.gradient(u, h, edge_order=2))


def _second_diff(u: np.ndarray, h: float, axis: int) -> np.ndarray:
    u = np.moveaxis(u, axis, 0)
    out = np.empty_like(u)
    out[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h**2
    if u.shape[0] >= 4:
        out[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / h**2
        out[-1] = (2.0 * u[-1] - 5.0 * u[-2] + 4.0 * u[-3] - u[-4]) / h**2
    else:
        out[0] = out[-1] = out[1]
    return np.moveaxis(out, 0, axis)


def hessian_array(u: np.ndarray, h: float) -> np.ndarray:
    d = u.ndim
    H = np.empty((d, d) + u.shape)
    for i in range(d):
        H[i, i] = _second_diff(u, h, i)
        for j in range(i + 1, d):
            # nested central differences give the four-corner stencil inside
            mixed = np.gradient(np.gradient(u, h, axis=j, edge_order=2), h, axis=i, edge_order=2)
            H[i, j] = H[j, i] = mixed
    return H


def interior_derivatives(u: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Gradient and Hessian at interior nodes only (shape trimmed by one per side)."""
    if u.ndim == 1:
        g = ((u[2:] - u[:-2]) / (2 * h))[None]
        H = ((u[2:] - 2 * u[1:-1] + u[:-2]) / h**2)[None, None]
        return g, H
    c = u[1:-1, 1:-1]
    gx = (u[2:, 1:-1] - u[:-2, 1:-1]) / (2 * h)
    gy = (u[1:-1, 2:] - u[1:-1, :-2]) / (2 * h)
    hxx = (u[2:, 1:-1] - 2 * c + u[:-2, 1:-1]) / h**2
    hyy = (u[1:-1, 2:] - 2 * c + u[1:-1, :-2]) / h**2
    hxy = (u[2:, 2:] - u[2:, :-2] - u[:-2, 2:] + u[:-2, :-2]) / (4 * h**2)
    return np.stack([gx, gy]), np.stack([np.stack([hxx, hxy]), np.stack([hxy, hyy])])


def gradient(f: Field) -> Field:
    _check_axes(f.grid)
    return Field(f.grid, gradient_array(f.values, f.grid.h), f.t)


def hessian(f: Field) -> Field:
    _check_axes(f.grid)
    return Field(f.grid, hessian_array(f.values, f.grid.h), f.t)


def time_derivative(solution: SpaceTimeSolution, level: int) -> Field:
    """Backward difference ``(u^k - u^{k-1}) / dt``."""
    if not 1 <= level <= solution.grid.nt:
        raise GridError(f"time derivative needs 1 <= level <= {solution.grid.nt}, got {level}")
    a, b = solution.levels[level - 1], solution.levels[level]
    return Field(solution.grid, (b.values - a.values) / solution.grid.dt, b.t)


def cylinder_mask(grid: Grid, r: float) -> np.ndarray:
    """Nodes with ``|x|_inf <= r``."""
    x = grid.coords()
    return np.max(np.abs(x), axis=0) <= r * (1 + 1e-12) + 1e-14


def in_time_window(t: float | None, r: float) -> bool:
    if t is None:
        return True
    return -r * r * (1 + 1e-12) - 1e-14 < t <= 1e-14


def sup_norm_on_cylinder(obj: Field | SpaceTimeSolution, r: float,
                         time_derivative_of: bool = False) -> float:
    """Max of ``|values|`` over ``Q_r = {|x|_inf <= r} x (-r^2, 0]``.

    For a SpaceTimeSolution with ``time_derivative_of=True`` the backward
    time difference is measured instead of the values themselves.
    """
    grid = obj.grid
    if r > grid.extent * (1 + 1e-12):
        raise GridError(f"radius {r} exceeds grid extent {grid.extent}")
    mask = cylinder_mask(grid, r)
    if isinstance(obj, Field):
        fields: Sequence[Field] = [obj]
    elif time_derivative_of:
        fields = [time_derivative(obj, k) for k in range(1, grid.nt + 1)]
    else:
        fields = obj.levels
    best = -math.inf
    for f in fields:
        if not in_time_window(f.t, r):
            continue
        vals = np.abs(f.values)
        vals = vals.reshape((-1,) + grid.shape).max(axis=0)
        best = max(best, float(vals[mask].max()))
    if best == -math.inf or not mask.any():
        raise GridError(f"cylinder of radius {r} contains no grid nodes")
    return best
