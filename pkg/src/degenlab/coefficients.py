"""Coefficient objects of the regularized equations.

Gradients ``q`` have the component axis first (shape ``(n, ...)``), matrices
have both component axes first (shape ``(n, n, ...)``), so the same routines
act on single points and on whole grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import SingularityError

PLAPLACE = "plaplace"
FULLY_NONLINEAR = "fully_nonlinear"
GENERAL_QUASILINEAR = "general_quasilinear"
FAMILIES = (PLAPLACE, FULLY_NONLINEAR, GENERAL_QUASILINEAR)


@dataclass(frozen=True)
class EllipticityPair:
    lam: float
    Lam: float

    def __post_init__(self):
        if not 0 < self.lam <= self.Lam:
            raise ValueError(f"need 0 < lambda <= Lambda, got ({self.lam}, {self.Lam})")


@dataclass(frozen=True, eq=False)
class SmoothOperatorF:
    """Smooth uniformly elliptic operator ``F`` with ``F(0) = 0``.

    ``kind="trace"`` is ``tr M``.  ``kind="bellman"`` is the soft maximum
    ``s * log(sum_k exp(tr(A_k M) / s)) - s * log K`` over the SPD matrices
    ``A_k``; it is convex, its derivative is a convex combination of the
    ``A_k``, and it lies within ``s * log K`` of ``max_k tr(A_k M)``.
    """

    kind: str = "trace"
    matrices: tuple = ()
    scale: float = 0.1
    ellipticity: EllipticityPair = field(default=None)

    def __post_init__(self):
        if self.kind == "trace":
            ell = EllipticityPair(1.0, 1.0)
        elif self.kind == "bellman":
            if not self.matrices or self.scale <= 0:
                raise ValueError("bellman operator needs matrices and a positive scale")
            mats = tuple(np.array(A, dtype=np.float64) for A in self.matrices)
            eigs = []
            for A in mats:
                if not np.allclose(A, A.T, rtol=0, atol=1e-14):
                    raise ValueError("bellman matrices must be symmetric")
                eigs.append(np.linalg.eigvalsh(A))
            lo = min(e.min() for e in eigs)
            if lo <= 0:
                raise ValueError("bellman matrices must be positive definite")
            ell = EllipticityPair(float(lo), float(max(e.max() for e in eigs)))
            object.__setattr__(self, "matrices", mats)
        else:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.ellipticity is None:
            object.__setattr__(self, "ellipticity", ell)

    @property
    def dim(self) -> int | None:
        return self.matrices[0].shape[0] if self.kind == "bellman" else None


TRACE = SmoothOperatorF("trace")


@dataclass(frozen=True, eq=False)
class CoefficientParams:
    family: str
    epsilon: float
    p: float | None = None
    gamma: float | None = None
    F: SmoothOperatorF | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.family == PLAPLACE:
            if self.p is None or self.p <= 1:
                raise ValueError("p-Laplace family requires p > 1")
        elif self.family == FULLY_NONLINEAR:
            if self.gamma is None or self.gamma <= -1:
                raise ValueError("fully nonlinear family requires gamma > -1")
            if self.F is None:
                object.__setattr__(self, "F", TRACE)
        else:
            if self.gamma is None or self.gamma <= 0 or self.p is None or self.p <= 1:
                raise ValueError("general quasilinear family requires gamma > 0 and p > 1")

    @classmethod
    def plaplace(cls, p: float, epsilon: float) -> "CoefficientParams":
        return cls(PLAPLACE, epsilon, p=p)

    @classmethod
    def fully_nonlinear(cls, gamma: float, epsilon: float,
                        F: SmoothOperatorF = TRACE) -> "CoefficientParams":
        return cls(FULLY_NONLINEAR, epsilon, gamma=gamma, F=F)

    @classmethod
    def general_quasilinear(cls, gamma: float, p: float, epsilon: float) -> "CoefficientParams":
        return cls(GENERAL_QUASILINEAR, epsilon, p=p, gamma=gamma)

    def with_epsilon(self, epsilon: float) -> "CoefficientParams":
        return CoefficientParams(self.family, epsilon, self.p, self.gamma, self.F)

    @property
    def is_quasilinear(self) -> bool:
        return self.family != FULLY_NONLINEAR

    @property
    def multiplier_exponent(self) -> float:
        """Power ``e`` of ``(eps^2 + |q|^2)^e`` multiplying the principal part."""
        if self.family == PLAPLACE:
            return (self.p - 2.0) / 2.0
        return self.gamma / 2.0

    @property
    def time_scaling_exponent(self) -> float:
        """Exponent of ``rho`` in the intrinsic time scale ``r^2 rho^k``."""
        return -2.0 * self.multiplier_exponent

    @property
    def conjugate_exponent(self) -> float:
        """Spatial growth exponent of the explicit solution: p' or 1 + 1/(1+gamma)."""
        if self.family == PLAPLACE:
            return self.p / (self.p - 1.0)
        return 1.0 + 1.0 / (1.0 + self.gamma)


def _s(params: CoefficientParams, q: np.ndarray) -> np.ndarray:
    return params.epsilon**2 + np.sum(q * q, axis=0)


def _eye(n: int, trailing: tuple) -> np.ndarray:
    return np.eye(n).reshape((n, n) + (1,) * len(trailing))


def a_tensor(params: CoefficientParams, q) -> np.ndarray:
    """``(eps^2+|q|^2)^e (delta_ij + (p-2) q_i q_j / (eps^2+|q|^2))``."""
    if not params.is_quasilinear:
        raise ValueError("a_tensor is defined for quasilinear families only")
    q = np.asarray(q, dtype=np.float64)
    n, trailing = q.shape[0], q.shape[1:]
    s = _s(params, q)
    e = params.multiplier_exponent
    zero = s == 0
    if np.any(zero) and e < 0:
        raise SingularityError("a_tensor is singular at eps = q = 0 for this exponent")
    s_safe = np.where(zero, 1.0, s)
    outer = q[:, None] * q[None, :] / s_safe
    a = _eye(n, trailing) + (params.p - 2.0) * outer
    mult = np.where(zero, 0.0 if e > 0 else 1.0, s_safe**e)
    return mult * a


def a_tensor_gradient(params: CoefficientParams, q) -> np.ndarray:
    """Derivative ``da^{ij}/dq_l`` returned with index order ``[i, j, l, ...]``."""
    if not params.is_quasilinear:
        raise ValueError("a_tensor_gradient is defined for quasilinear families only")
    q = np.asarray(q, dtype=np.float64)
    n, trailing = q.shape[0], q.shape[1:]
    s = _s(params, q)
    if np.any(s == 0):
        raise SingularityError("a_tensor_gradient is singular at eps = q = 0")
    e = params.multiplier_exponent
    c = params.p - 2.0
    I = _eye(n, trailing)
    qi, qj, ql = q[:, None, None], q[None, :, None], q[None, None, :]
    t1 = 2.0 * e * s ** (e - 1.0) * ql * I[:, :, None]
    t2 = 2.0 * c * (e - 1.0) * s ** (e - 2.0) * qi * qj * ql
    t3 = c * s ** (e - 1.0) * (I[:, None, :] * qj + I[None, :, :] * qi)
    return t1 + t2 + t3


def ellipticity_of(params: CoefficientParams) -> EllipticityPair:
    if params.is_quasilinear:
        p = params.p
        return EllipticityPair(min(p - 1.0, 1.0), max(p - 1.0, 1.0))
    return params.F.ellipticity


def degenerate_multiplier(params: CoefficientParams, q) -> np.ndarray:
    """``(eps^2 + |q|^2)^(gamma/2)``."""
    q = np.asarray(q, dtype=np.float64)
    s = _s(params, q)
    g = params.gamma
    zero = s == 0
    if np.any(zero) and g < 0:
        raise SingularityError("multiplier is singular at eps = q = 0 for gamma < 0")
    return np.where(zero, 0.0 if g > 0 else 1.0, np.where(zero, 1.0, s) ** (g / 2.0))


def _to_last(M: np.ndarray) -> np.ndarray:
    return np.moveaxis(np.moveaxis(M, 0, -1), 0, -1)


def pucci(ellipticity: EllipticityPair, M, sign: str = "plus") -> np.ndarray:
    """Pucci extremal operator through the eigenvalues of ``M``."""
    M = np.asarray(M, dtype=np.float64)
    if not np.allclose(M, np.swapaxes(M, 0, 1), rtol=1e-12, atol=1e-12):
        raise ValueError("Pucci operator needs a symmetric matrix")
    eig = np.linalg.eigvalsh(_to_last(M))
    pos = np.where(eig > 0, eig, 0.0).sum(axis=-1)
    neg = np.where(eig < 0, eig, 0.0).sum(axis=-1)
    lam, Lam = ellipticity.lam, ellipticity.Lam
    if sign == "plus":
        return Lam * pos + lam * neg
    if sign == "minus":
        return lam * pos + Lam * neg
    raise ValueError("sign must be 'plus' or 'minus'")


def _traces(F: SmoothOperatorF, M: np.ndarray) -> np.ndarray:
    return np.stack([np.einsum("ij,ij...->...", A, M) for A in F.matrices])


def evaluate_F(F: SmoothOperatorF, M) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if F.kind == "trace":
        return np.einsum("ii...->...", M)
    s = F.scale
    return s * logsumexp(_traces(F, M) / s, axis=0) - s * math.log(len(F.matrices))


def F_gradient(F: SmoothOperatorF, M) -> np.ndarray:
    """``dF/dM_ij`` in components-first layout."""
    M = np.asarray(M, dtype=np.float64)
    n, trailing = M.shape[0], M.shape[2:]
    if F.kind == "trace":
        return np.broadcast_to(_eye(n, trailing), (n, n) + trailing).copy()
    w = softmax(_traces(F, M) / F.scale, axis=0)
    return np.einsum("k...,kij->ij...", w, np.stack(F.matrices))


def bellman(matrices: Sequence, scale: float = 0.1) -> SmoothOperatorF:
    return SmoothOperatorF("bellman", tuple(matrices), scale)


def principal_part(params: CoefficientParams, q, M) -> np.ndarray:
    """Right-hand side of the regularized equation at the jet ``(q, M)``."""
    q = np.asarray(q, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    if params.is_quasilinear:
        return np.einsum("ij...,ij...->...", a_tensor(params, q), M)
    return degenerate_multiplier(params, q) * evaluate_F(params.F, M)
