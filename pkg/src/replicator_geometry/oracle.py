"""Brute-force verifiers that share no code path with the closed forms.

* a grid-discretized 1-D replicator for measures (checks that Gaussians stay
  Gaussian under a quadratic-bilinear landscape),
* central finite differences of an objective in ``(a, C)``,
* Monte Carlo evaluation of the mean fitness,
* a random search over equal-Fisher-norm tangents for the steepest-ascent
  property of the natural gradient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple

import numpy as np

from .errors import NumericalError
from .gaussian_manifold import GaussianParams, ManifoldTangent, QuadBilinearLandscape, fisher_quadratic_form
from .nes_engine import make_rng, sample_gaussian

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class GridDensity:
    """Probability weights on uniformly spaced cell midpoints.

    Weight ``w_k`` is the mass of the cell of width ``h`` centred at ``nodes[k]``.
    """

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != w.shape:
            raise ValueError("nodes and weights must be vectors of equal length")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        if nodes.size > 2:
            steps = np.diff(nodes)
            if np.max(np.abs(steps - steps[0])) > 1e-9 * max(1.0, abs(steps[0])):
                raise ValueError("nodes are not uniformly spaced")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", w)

    @property
    def h(self) -> float:
        return float(self.nodes[1] - self.nodes[0]) if self.nodes.size > 1 else 1.0

    @classmethod
    def discretize_normal(cls, mean: float, var: float, s_min: float, s_max: float, K: int) -> "GridDensity":
        """Midpoint-rule discretization of ``N(mean, var)`` on ``K`` cells of ``[s_min, s_max]``."""
        h = (s_max - s_min) / K
        nodes = s_min + (np.arange(K) + 0.5) * h
        w = np.exp(-0.5 * (nodes - mean) ** 2 / var)
        return cls(nodes, w / w.sum())


class GridMoments(NamedTuple):
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float
    degenerate: bool


def grid_moments(d: GridDensity) -> GridMoments:
    """Weighted mean, variance, skewness and excess kurtosis.

    For zero variance the shape moments are undefined; they come back as NaN and
    ``degenerate`` is set.
    """
    w, s = d.weights, d.nodes
    mu = float(w @ s)
    r = s - mu
    var = float(w @ r**2)
    if var <= 0.0:
        return GridMoments(mu, 0.0, math.nan, math.nan, True)
    skew = float(w @ r**3) / var**1.5
    kurt = float(w @ r**4) / var**2 - 3.0
    return GridMoments(mu, var, skew, kurt, False)


def _grid_velocity(w, s, q, b):
    mu = w @ s
    payoff = -q * s * s + b * s * mu
    return w * (payoff - w @ payoff)


def grid_replicator_rhs(d: GridDensity, q: float, b: float) -> np.ndarray:
    """Replicator derivative of the cell weights for ``f(s, y) = -q s^2 + b s y``.

    A trait ``s_k`` earns ``pi_k = -q s_k^2 + b s_k mu`` against a population with
    mean ``mu``; the weights move as ``w_k (pi_k - <pi>)``.
    """
    return _grid_velocity(d.weights, d.nodes, q, b)


@dataclass
class GridRun:
    times: np.ndarray
    densities: List[GridDensity]
    max_mass_drift: float
    moments: List[GridMoments] = field(default_factory=list)


def integrate_grid(d0: GridDensity, q: float, b: float, dt: float, t_end: float, record_every: int = 1) -> GridRun:
    """RK4 for the grid replicator with renormalization after every step.

    ``max_mass_drift`` is the largest ``|sum w - 1|`` seen before renormalizing.
    """
    s = d0.nodes
    w = d0.weights.copy()
    n_steps = max(1, int(round(t_end / dt)))
    times, dens = [0.0], [d0]
    drift = 0.0
    for k in range(1, n_steps + 1):
        k1 = _grid_velocity(w, s, q, b)
        k2 = _grid_velocity(w + 0.5 * dt * k1, s, q, b)
        k3 = _grid_velocity(w + 0.5 * dt * k2, s, q, b)
        k4 = _grid_velocity(w + dt * k3, s, q, b)
        w = w + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(w)):
            raise NumericalError(f"non-finite grid weights at t={k * dt:.6g}")
        total = w.sum()
        drift = max(drift, abs(total - 1.0))
        w = np.maximum(w, 0.0) / total
        if k % record_every == 0 or k == n_steps:
            times.append(k * dt)
            dens.append(GridDensity(s, w.copy()))
    return GridRun(np.array(times), dens, drift, [grid_moments(x) for x in dens])


def _perturbations(n: int):
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        yield ManifoldTangent(e, np.zeros((n, n)))
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] += 0.5
            E[j, i] += 0.5
            yield ManifoldTangent(np.zeros(n), E)


def finite_diff_grad(objective: Callable[[np.ndarray, np.ndarray], float], g: GaussianParams, h: float = 1e-5) -> ManifoldTangent:
    """Central differences of ``objective(a, C)`` at ``g``.

    Each mean coordinate is perturbed by ``+-h``; each covariance entry ``(i, j)``
    by ``+-h`` followed by symmetrization, i.e. along ``(E_ij + E_ji) / 2``.  For a
    gradient in the entrywise convention this recovers its ``(i, j)`` entry.
    """
    if not 1e-8 <= h <= 1e-3:
        raise ValueError(f"h must lie in [1e-8, 1e-3], got {h}")
    n = g.n
    da = np.zeros(n)
    dC = np.zeros((n, n))

    def value(a, C):
        v = float(objective(a, C))
        if not math.isfinite(v):
            raise NumericalError("objective returned a non-finite value")
        return v

    for k, t in enumerate(_perturbations(n)):
        plus = value(g.a + h * t.da, g.C + h * t.dC)
        minus = value(g.a - h * t.da, g.C - h * t.dC)
        d = (plus - minus) / (2.0 * h)
        if k < n:
            da[k] = d
        else:
            i, j = np.argwhere(t.dC)[0]
            dC[i, j] = dC[j, i] = d
    return ManifoldTangent(da, dC)


class MCEstimate(NamedTuple):
    mean: float
    stderr: float
    m: int


def mc_expectation(L: QuadBilinearLandscape, g: GaussianParams, m: int, seed) -> MCEstimate:
    """Sample mean of ``f(s, y)`` over independent pairs ``s, y ~ N(a, C)``."""
    if m < 100:
        raise ValueError(f"need m >= 100 samples, got {m}")
    rng = make_rng(seed)
    s = sample_gaussian(g, m, rng)
    y = sample_gaussian(g, m, rng)
    f = L.fitness(s, y)
    return MCEstimate(float(f.mean()), float(f.std(ddof=1) / math.sqrt(m)), m)


def random_tangents(n: int, count: int, seed):
    """``count`` Gaussian random tangents as arrays ``(da, dC)`` of shapes
    ``(count, n)`` and ``(count, n, n)``; ``dC`` is symmetric."""
    rng = make_rng(seed)
    da = rng.standard_normal((count, n))
    X = rng.standard_normal((count, n, n))
    return da, 0.5 * (X + np.swapaxes(X, 1, 2))


class SteepestAscentCheck(NamedTuple):
    natural_gain: float
    best_random_gain: float

    @property
    def relative_excess(self) -> float:
        """How far the best random tangent exceeds the natural direction, relatively."""
        return (self.best_random_gain - self.natural_gain) / abs(self.natural_gain)


def steepest_ascent_check(
    g: GaussianParams,
    grad: ManifoldTangent,
    direction: ManifoldTangent,
    eps: float = 1e-4,
    count: int = 10_000,
    seed=0,
) -> SteepestAscentCheck:
    """Compare first-order gains ``grad . delta`` on the Fisher sphere of radius ``eps``.

    ``direction`` (typically the natural gradient) and ``count`` random tangents
    are each rescaled so that ``fisher_quadratic_form(g, delta) = eps``.
    """
    q_dir = fisher_quadratic_form(g, direction)
    natural = grad.dot(direction) * math.sqrt(eps / q_dir)

    da, dC = random_tangents(g.n, count, seed)
    P = g.precision()
    X = P @ dC
    q = 0.5 * np.einsum("ki,ij,kj->k", da, P, da) + 0.25 * np.einsum("kij,kji->k", X, X)
    lin = da @ grad.da + np.einsum("kij,ij->k", dC, grad.dC)
    best = float(np.max(lin * np.sqrt(eps / q)))
    return SteepestAscentCheck(float(natural), best)
