"""Evolutionary games with a finite strategy set.

States are interior points of the probability simplex.  The module provides the
replicator vector field, the Shahshahani (categorical Fisher) geometry, the
Kullback-Leibler divergence and the Lyapunov / ESS diagnostics built on it.

All functions accept either a :class:`SimplexPoint` or a plain array; arrays are
validated on entry.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Union

import numpy as np

from .errors import BoundaryError, DimensionError

#: smallest admissible probability of an interior point
INTERIOR_EPS = 1e-12
SUM_TOL = 1e-12


def _validated(p: np.ndarray) -> np.ndarray:
    if p.ndim != 1 or p.size < 1:
        raise DimensionError(f"simplex point must be a non-empty vector, got shape {p.shape}")
    total = p.sum()
    if not abs(total - 1.0) <= SUM_TOL:
        raise BoundaryError(f"components sum to {total!r}, not 1")
    lo = p.min()
    if not lo >= INTERIOR_EPS:
        raise BoundaryError(f"point is not interior: min component {lo:.3g} < {INTERIOR_EPS:g}")
    return p


@dataclass(frozen=True)
class SimplexPoint:
    """Interior point of the probability simplex."""

    p: np.ndarray

    def __post_init__(self):
        p = _validated(np.array(self.p, dtype=float))
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.p.size

    def __array__(self, dtype=None, copy=None):
        return self.p if dtype is None else self.p.astype(dtype)

    @classmethod
    def uniform(cls, n: int) -> "SimplexPoint":
        return cls(np.full(n, 1.0 / n))


PointLike = Union[SimplexPoint, np.ndarray, Iterable[float]]


def as_point(p: PointLike) -> np.ndarray:
    """Validate ``p`` and return its probability vector."""
    if isinstance(p, SimplexPoint):
        return p.p
    if isinstance(p, np.ndarray) and p.dtype == float:
        return _validated(p)
    return SimplexPoint(p).p


@dataclass(frozen=True)
class FiniteLandscape:
    """Fitness landscape on ``n`` strategies.

    Either a payoff matrix ``A`` (linear fitness ``f(p) = A p``) or an arbitrary
    callable ``fitness_fn(p) -> f(p)``.
    """

    payoff_matrix: Optional[np.ndarray] = None
    fitness_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if (self.payoff_matrix is None) == (self.fitness_fn is None):
            raise ValueError("give exactly one of payoff_matrix or fitness_fn")
        if self.payoff_matrix is not None:
            A = np.array(self.payoff_matrix, dtype=float)
            if A.ndim != 2 or A.shape[0] != A.shape[1]:
                raise DimensionError(f"payoff matrix must be square, got shape {A.shape}")
            A.setflags(write=False)
            object.__setattr__(self, "payoff_matrix", A)

    @classmethod
    def linear(cls, A) -> "FiniteLandscape":
        return cls(payoff_matrix=A)

    @property
    def n(self) -> Optional[int]:
        return None if self.payoff_matrix is None else self.payoff_matrix.shape[0]

    def fitness(self, p: np.ndarray) -> np.ndarray:
        if self.payoff_matrix is not None:
            if self.payoff_matrix.shape[0] != p.size:
                raise DimensionError(
                    f"payoff matrix is {self.payoff_matrix.shape[0]}x{self.payoff_matrix.shape[0]}"
                    f" but the point has {p.size} components"
                )
            return self.payoff_matrix @ p
        f = np.asarray(self.fitness_fn(p), dtype=float)
        if f.shape != p.shape:
            raise DimensionError(f"fitness_fn returned shape {f.shape}, expected {p.shape}")
        return f


def _fitness(f, p: np.ndarray) -> np.ndarray:
    if isinstance(f, FiniteLandscape):
        return f.fitness(p)
    if isinstance(f, np.ndarray) and f.ndim == 2 and f.shape == (p.size, p.size):
        return f @ p
    if callable(f):
        return FiniteLandscape(fitness_fn=f).fitness(p)
    return FiniteLandscape(payoff_matrix=f).fitness(p)


def mean_fitness(p: PointLike, f) -> float:
    """Population-average fitness ``sum_i p_i f_i(p)``."""
    p = as_point(p)
    return float(p @ _fitness(f, p))


def replicator_rhs(p: PointLike, f) -> np.ndarray:
    """Replicator vector field ``p_i (f_i(p) - <f(p)>)``.

    ``f`` may be a :class:`FiniteLandscape`, a payoff matrix or a callable.
    """
    p = as_point(p)
    fit = _fitness(f, p)
    return p * (fit - p @ fit)


def shahshahani_gradient(p: PointLike, grad_V) -> np.ndarray:
    """Gradient of a potential in the Shahshahani metric, restricted to the simplex.

    ``grad_V`` is the vector of Euclidean partial derivatives of ``V`` at ``p``.
    The metric ``g(u, v) = sum u_i v_i / p_i`` is inverted on the tangent space
    ``{v : sum v_i = 0}``, which yields ``p_i (dV_i - sum_j p_j dV_j)``.
    """
    p = as_point(p)
    g = np.asarray(grad_V, dtype=float)
    if g.shape != p.shape:
        raise DimensionError(f"gradient has shape {g.shape}, point has {p.shape}")
    return p * (g - p @ g)


def shahshahani_inner(p: PointLike, u, v) -> float:
    """Shahshahani inner product of two tangent vectors at ``p``."""
    p = as_point(p)
    return float(np.sum(np.asarray(u) * np.asarray(v) / p))


def kl_categorical(p: PointLike, q: PointLike) -> float:
    """Kullback-Leibler divergence ``sum_i p_i ln(p_i / q_i)``.

    Evaluated as ``sum_i p_i (d_i - log1p(d_i))`` with ``d_i = q_i/p_i - 1``.
    The two forms differ by ``sum q - sum p``, which vanishes on the simplex; the
    second is non-negative term by term and keeps full relative accuracy when
    ``p`` is close to ``q``.
    """
    p = as_point(p)
    q = as_point(q)
    if p.shape != q.shape:
        raise DimensionError(f"dimension mismatch: {p.size} vs {q.size}")
    d = (q - p) / p
    return float(np.sum(p * (d - np.log1p(d))))


def kl_categorical_direct(p: PointLike, q: PointLike) -> float:
    """Textbook evaluation of ``sum p ln(p/q)``; loses accuracy as ``p -> q``."""
    p = as_point(p)
    q = as_point(q)
    if p.shape != q.shape:
        raise DimensionError(f"dimension mismatch: {p.size} vs {q.size}")
    return float(np.sum(p * np.log(p / q)))


def fisher_categorical(p: PointLike) -> np.ndarray:
    """Fisher information of the categorical family: ``diag(1/p)``."""
    return np.diag(1.0 / as_point(p))


def lyapunov_series(target: PointLike, traj) -> np.ndarray:
    """``KL(target || p(t))`` at every sample of a trajectory.

    ``traj`` is a :class:`~replicator_geometry.flow_engine.Trajectory` or any
    iterable of simplex states.
    """
    t = as_point(target)
    states = getattr(traj, "states", traj)
    out = []
    for s in states:
        p = as_point(s)
        if p.shape != t.shape:
            raise DimensionError(f"trajectory state has {p.size} components, target {t.size}")
        out.append(kl_categorical(t, p))
    return np.asarray(out)


def _tangent_mesh(n: int) -> np.ndarray:
    """Unit tangent directions ``e_i - e_j`` for every ordered pair, plus the
    directions from the centroid towards each vertex."""
    dirs = []
    for i in range(n):
        for j in range(n):
            if i != j:
                d = np.zeros(n)
                d[i], d[j] = 1.0, -1.0
                dirs.append(d)
    centroid = np.full(n, 1.0 / n)
    for i in range(n):
        d = -centroid.copy()
        d[i] += 1.0
        dirs.append(d)
    dirs = np.array(dirs)
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def is_ess_candidate(p_hat: PointLike, f, radius: float = 1e-3) -> bool:
    """Falsification test for an interior ESS.

    Checks ``p_hat . f(p) > p . f(p)`` for ``p = p_hat + radius * d`` over a fixed
    mesh of tangent directions ``d``.  Passing is evidence, not a proof.
    """
    p_hat = as_point(p_hat)
    for d in _tangent_mesh(p_hat.size):
        p = p_hat + radius * d
        if np.any(p <= 0):
            continue
        fp = _fitness(f, p)
        if not (p_hat @ fp > p @ fp):
            return False
    return True


# a few classical games
HAWK_DOVE = np.array([[0.0, 1.0], [1.0, 0.0]])
ROCK_PAPER_SCISSORS = np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])
