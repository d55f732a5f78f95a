"""The manifold of multivariate Gaussians N(a, C) under a quadratic-bilinear game.

A population playing N(a, C) in the landscape ``f(s, y) = -s'Qs + s'By`` has
mean fitness ``J(a, C) = -a'Qa - tr(QC) + a'Ba``.  This module evaluates ``J``,
its vanilla gradient, the Fisher / inverse-Fisher maps on tangent vectors and
the replicator vector field that results from them.

Gradients with respect to ``C`` use the entrywise convention: ``d tr(QC)/dC = Q``
with no doubling of off-diagonal entries.  The inverse Fisher map is
``(da, dC) -> (C da, 2 C dC C)`` and the matching quadratic form is
``1/2 da'C^-1 da + 1/4 tr((C^-1 dC)^2)``; the two are dual under the pairing
``<g, t> = g_a . t_a + sum(g_C * t_C)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import DimensionError, NotPositiveDefiniteError

SYM_TOL = 1e-10


def _symmetric(M, name: str) -> np.ndarray:
    M = np.array(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M))) if M.size else 1.0)
    if np.max(np.abs(M - M.T), initial=0.0) > SYM_TOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (M + M.T)


def cholesky(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor; raises :class:`NotPositiveDefiniteError` on failure."""
    if not np.all(np.isfinite(M)):
        raise NotPositiveDefiniteError(f"{name} has non-finite entries")
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"{name} is not positive definite") from exc


def spd_inverse(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    L = cholesky(M, name)
    inv = linalg.cho_solve((L, True), np.eye(M.shape[0]))
    return 0.5 * (inv + inv.T)


@dataclass(frozen=True)
class GaussianParams:
    """Mean vector ``a`` and covariance ``C`` of a multivariate normal.

    ``C`` is symmetrized on construction and must admit a Cholesky factor.
    """

    a: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.array(self.a, dtype=float))
        C = np.array(self.C, dtype=float)
        if C.ndim == 0:
            C = C.reshape(1, 1)
        if a.ndim != 1:
            raise DimensionError(f"mean must be a vector, got shape {a.shape}")
        if C.shape != (a.size, a.size):
            raise DimensionError(f"covariance shape {C.shape} does not match mean length {a.size}")
        C = 0.5 * (C + C.T)
        chol = cholesky(C, "covariance C")
        for arr in (a, C, chol):
            arr.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "_chol", chol)

    @property
    def n(self) -> int:
        return self.a.size

    @property
    def chol(self) -> np.ndarray:
        return self._chol

    def solve(self, x: np.ndarray) -> np.ndarray:
        """``C^-1 x`` via the cached factor."""
        return linalg.cho_solve((self._chol, True), x)

    def precision(self) -> np.ndarray:
        P = self.solve(np.eye(self.n))
        return 0.5 * (P + P.T)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self._chol))))

    def shifted(self, t: "ManifoldTangent", step: float = 1.0) -> "GaussianParams":
        return GaussianParams(self.a + step * t.da, self.C + step * t.dC)


@dataclass(frozen=True)
class QuadBilinearLandscape:
    """Fitness ``f(s, y) = -s'Qs + s'By``; ``Q`` symmetric positive definite."""

    Q: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        Q = _symmetric(self.Q, "Q")
        B = np.array(self.B, dtype=float)
        if B.ndim == 0:
            B = B.reshape(1, 1)
        if B.shape != Q.shape:
            raise DimensionError(f"B has shape {B.shape}, Q has {Q.shape}")
        cholesky(Q, "Q")
        Q.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def fitness(self, s: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Row-wise ``f(s_k, y_k)`` for arrays of shape ``(m, n)``."""
        s = np.atleast_2d(s)
        y = np.atleast_2d(y)
        return -np.einsum("ki,ij,kj->k", s, self.Q, s) + np.einsum("ki,ij,kj->k", s, self.B, y)

    def fitness_vs_population(self, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        """``E_y f(s, y)`` for ``y ~ N(a, C)``, i.e. ``-s'Qs + s'Ba``."""
        s = np.atleast_2d(s)
        return -np.einsum("ki,ij,kj->k", s, self.Q, s) + s @ (self.B @ a)


@dataclass(frozen=True)
class ManifoldTangent:
    """Tangent vector ``(da, dC)`` at a Gaussian; ``dC`` symmetric."""

    da: np.ndarray
    dC: np.ndarray

    def __post_init__(self):
        da = np.atleast_1d(np.array(self.da, dtype=float))
        dC = _symmetric(self.dC, "dC")
        if dC.shape != (da.size, da.size):
            raise DimensionError(f"dC shape {dC.shape} does not match da length {da.size}")
        object.__setattr__(self, "da", da)
        object.__setattr__(self, "dC", dC)

    @property
    def n(self) -> int:
        return self.da.size

    def flat(self) -> np.ndarray:
        return np.concatenate([self.da, self.dC.ravel()])

    def dot(self, other: "ManifoldTangent") -> float:
        """Euclidean pairing ``da.da' + sum(dC * dC')``."""
        return float(self.da @ other.da + np.sum(self.dC * other.dC))

    def __mul__(self, c: float) -> "ManifoldTangent":
        return ManifoldTangent(c * self.da, c * self.dC)

    __rmul__ = __mul__

    def __add__(self, other: "ManifoldTangent") -> "ManifoldTangent":
        return ManifoldTangent(self.da + other.da, self.dC + other.dC)

    def __sub__(self, other: "ManifoldTangent") -> "ManifoldTangent":
        return ManifoldTangent(self.da - other.da, self.dC - other.dC)

    def __truediv__(self, c: float) -> "ManifoldTangent":
        return ManifoldTangent(self.da / c, self.dC / c)

    @classmethod
    def zeros(cls, n: int) -> "ManifoldTangent":
        return cls(np.zeros(n), np.zeros((n, n)))


def _check_dims(g: GaussianParams, L: QuadBilinearLandscape):
    if g.n != L.n:
        raise DimensionError(f"Gaussian has dimension {g.n}, landscape {L.n}")


def expected_fitness(
    g: GaussianParams, L: QuadBilinearLandscape, opponent: Optional[GaussianParams] = None
) -> float:
    """Mean fitness ``J(a, C) = -a'Qa - tr(QC) + a'Ba``.

    With ``opponent`` given, returns the payoff of strategy ``g`` against a
    population in state ``opponent``: ``-a'Qa - tr(QC) + a'B a_opp``.  The vanilla
    gradient is the derivative of this payoff in ``g`` at ``opponent = g``.
    """
    _check_dims(g, L)
    a, C = g.a, g.C
    a_opp = a if opponent is None else opponent.a
    if a_opp.shape != a.shape:
        raise DimensionError("opponent dimension mismatch")
    return float(-a @ L.Q @ a - np.sum(L.Q * C) + a @ L.B @ a_opp)


def vanilla_grad(g: GaussianParams, L: QuadBilinearLandscape) -> ManifoldTangent:
    """``(-2Qa + Ba, -Q)``."""
    _check_dims(g, L)
    return ManifoldTangent(-2.0 * L.Q @ g.a + L.B @ g.a, -L.Q)


def natural_grad(g: GaussianParams, t: ManifoldTangent) -> ManifoldTangent:
    """Apply the inverse Fisher map: ``(C da, 2 C dC C)``."""
    if t.n != g.n:
        raise DimensionError(f"tangent has dimension {t.n}, Gaussian {g.n}")
    C = g.C
    return ManifoldTangent(C @ t.da, 2.0 * C @ t.dC @ C)


def replicator_rhs_gaussian(g: GaussianParams, L: QuadBilinearLandscape) -> ManifoldTangent:
    """Mean/covariance replicator field: ``(C (B - 2Q) a, -2 C Q C)``."""
    _check_dims(g, L)
    C = g.C
    return ManifoldTangent(C @ ((L.B - 2.0 * L.Q) @ g.a), -2.0 * C @ L.Q @ C)


def fisher_quadratic_form(g: GaussianParams, t: ManifoldTangent) -> float:
    """Second-order KL approximation ``1/2 da'C^-1 da + 1/4 tr((C^-1 dC)^2)``."""
    if t.n != g.n:
        raise DimensionError(f"tangent has dimension {t.n}, Gaussian {g.n}")
    X = g.solve(t.dC)
    return float(0.5 * t.da @ g.solve(t.da) + 0.25 * np.sum(X * X.T))


def fisher_apply(g: GaussianParams, t: ManifoldTangent) -> ManifoldTangent:
    """Forward Fisher map ``(C^-1 da, 1/2 C^-1 dC C^-1)``; inverse of :func:`natural_grad`."""
    P = g.precision()
    return ManifoldTangent(P @ t.da, 0.5 * P @ t.dC @ P)


def kl_gaussian(g1: GaussianParams, g0: GaussianParams) -> float:
    """``KL(N(a1, C1) || N(a0, C0))`` in closed form."""
    if g1.n != g0.n:
        raise DimensionError(f"dimension mismatch: {g1.n} vs {g0.n}")
    diff = g0.a - g1.a
    tr = float(np.trace(g0.solve(g1.C)))
    maha = float(diff @ g0.solve(diff))
    return 0.5 * (tr - g1.n + maha + g0.logdet() - g1.logdet())
