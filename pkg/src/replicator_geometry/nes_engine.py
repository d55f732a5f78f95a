"""Natural evolution strategies on the Gaussian manifold.

Search gradients are estimated with the score-function (log-likelihood)
estimator, optionally after rank-based fitness shaping, and mapped through the
inverse Fisher metric.  The module also provides the sigma-normalized
replicator field that fitness shaping induces in the continuous-time limit.

Random numbers come from ``numpy.random.Generator(Philox(seed))``: Philox is a
counter-based bit generator, so a given seed always reproduces the same batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericalError
from .flow_engine import Trajectory
from .gaussian_manifold import (
    GaussianParams,
    ManifoldTangent,
    QuadBilinearLandscape,
    expected_fitness,
    natural_grad,
    replicator_rhs_gaussian,
    vanilla_grad,
)


def make_rng(seed) -> np.random.Generator:
    """Seeded counter-based generator; ``seed`` may be an int or a SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class ShapingSpec:
    kind: str = "none"  # "none" | "rank"
    truncation: float = 0.5

    def __post_init__(self):
        if self.kind not in ("none", "rank"):
            raise ValueError(f"unknown shaping kind {self.kind!r}")
        if not 0.0 < self.truncation <= 1.0:
            raise ValueError(f"truncation must lie in (0, 1], got {self.truncation}")


@dataclass
class SampleBatch:
    points: np.ndarray
    fitness: np.ndarray
    utilities: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        m = self.points.shape[0]
        if self.fitness.shape != (m,) or self.utilities.shape != (m,):
            raise ValueError("points, fitness and utilities must have equal lengths")


def sample_gaussian(g: GaussianParams, m: int, seed) -> np.ndarray:
    """``m`` i.i.d. draws from ``N(a, C)`` as rows of an ``(m, n)`` array."""
    if m < 2:
        raise ValueError(f"need m >= 2 samples, got {m}")
    z = make_rng(seed).standard_normal((m, g.n))
    return g.a + z @ g.chol.T


def log_likelihood_grad(x: np.ndarray, g: GaussianParams) -> ManifoldTangent:
    """Score of ``N(a, C)`` at ``x``: ``(C^-1 r, 1/2 (C^-1 r r' C^-1 - C^-1))``, ``r = x - a``."""
    x = np.asarray(x, dtype=float)
    if x.shape != g.a.shape:
        raise ValueError(f"x has shape {x.shape}, expected {g.a.shape}")
    u = g.solve(x - g.a)
    return ManifoldTangent(u, 0.5 * (np.outer(u, u) - g.precision()))


def score_batch(points: np.ndarray, g: GaussianParams):
    """Vectorized scores for a batch: returns ``(U, P)`` with ``U = C^-1 (x_i - a)``
    row-wise and ``P = C^-1``; the covariance score of row ``i`` is
    ``1/2 (U_i U_i' - P)``."""
    U = g.solve((points - g.a).T).T
    return U, g.precision()


def rank_utilities(fitness, spec: ShapingSpec = ShapingSpec("rank")) -> np.ndarray:
    """Truncated-logarithmic rank utilities, centred to sum to zero.

    The best sample (rank 1) gets raw weight ``ln(k + 1) - ln 1`` with
    ``k = ceil(truncation * m)``; ranks beyond ``k`` get zero.  Weights are
    normalized to sum to one and ``1/m`` is subtracted.  Ties keep index order.
    """
    f = np.asarray(fitness, dtype=float)
    m = f.size
    if m < 2:
        raise ValueError(f"need m >= 2 samples, got {m}")
    k = math.ceil(spec.truncation * m)
    order = np.argsort(-f, kind="stable")
    ranks = np.arange(1, m + 1)
    raw = np.maximum(0.0, math.log(k + 1) - np.log(ranks))
    w = raw / raw.sum()
    u = np.empty(m)
    u[order] = w - 1.0 / m
    return u


def _sample_fitness(L, g, points, rng, pairing):
    if pairing:
        y = sample_gaussian(g, points.shape[0], rng)
        return L.fitness(points, y)
    return L.fitness_vs_population(points, g.a)


def draw_batch(
    g: GaussianParams,
    L: QuadBilinearLandscape,
    m: int,
    seed,
    shaping: ShapingSpec = ShapingSpec(),
    pairing: bool = False,
) -> SampleBatch:
    """Sample ``m`` traits and score them against the population.

    Without ``pairing`` the fitness of ``x`` is its exact expectation over an
    opponent drawn from the population, ``-x'Qx + x'Ba``.  With ``pairing`` each
    trait meets one independently drawn opponent.
    """
    if m < 2:
        raise ValueError(f"need m >= 2 samples, got {m}")
    rng = make_rng(seed)
    points = sample_gaussian(g, m, rng)
    fit = _sample_fitness(L, g, points, rng, pairing)
    util = rank_utilities(fit, shaping) if shaping.kind == "rank" else fit.copy()
    return SampleBatch(points, fit, util, seed if isinstance(seed, int) else None)


def batch_gradient(batch: SampleBatch, g: GaussianParams) -> ManifoldTangent:
    """``1/m sum_i w_i grad log p(x_i)`` with ``w`` the batch utilities."""
    w = batch.utilities
    m = w.size
    U, P = score_batch(batch.points, g)
    da = w @ U / m
    dC = 0.5 * ((U.T * w) @ U / m - w.mean() * P)
    return ManifoldTangent(da, dC)


def estimate_search_gradient(
    g: GaussianParams,
    L: QuadBilinearLandscape,
    m: int,
    seed,
    shaping: ShapingSpec = ShapingSpec(),
    pairing: bool = False,
) -> ManifoldTangent:
    """Monte Carlo search gradient ``1/m sum f(x_i) grad log p(x_i)``.

    With ``shaping.kind == "rank"`` the fitness values are replaced by rank
    utilities, which estimates the gradient of the shaped objective instead.
    """
    return batch_gradient(draw_batch(g, L, m, seed, shaping, pairing), g)


def sigma_f(g: GaussianParams, L: QuadBilinearLandscape) -> float:
    """``sqrt(a'(B - 2Q)' C (B - 2Q) a + tr[(QC)^2])``."""
    M = L.B - 2.0 * L.Q
    v = M @ g.a
    QC = L.Q @ g.C
    radicand = float(v @ g.C @ v + np.sum(QC * QC.T))
    if not radicand >= 0:
        raise NumericalError(f"negative radicand in sigma_f: {radicand!r}")
    return math.sqrt(radicand)


def sigma_normalized_rhs(g: GaussianParams, L: QuadBilinearLandscape) -> ManifoldTangent:
    """Replicator field divided by :func:`sigma_f`."""
    s = sigma_f(g, L)
    if s == 0.0:
        raise NumericalError("sigma_f vanished; covariance is degenerate")
    return replicator_rhs_gaussian(g, L) / s


def natural_gradient_ascent(
    g0: GaussianParams,
    L: QuadBilinearLandscape,
    step: float,
    iters: int,
    mode: str = "analytic",
    m: int = 1000,
    seed: int = 0,
    shaping: ShapingSpec = ShapingSpec(),
    pairing: bool = False,
) -> Trajectory:
    """Discrete natural-gradient ascent ``theta <- theta + step * F^-1 grad``.

    In ``"analytic"`` mode the gradient is :func:`vanilla_grad`; in ``"sampled"``
    mode it is :func:`estimate_search_gradient` with an independent stream per
    iteration spawned from ``seed``.  Raises NotPositiveDefiniteError if an
    update leaves the SPD cone.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if mode not in ("analytic", "sampled"):
        raise ValueError(f"unknown mode {mode!r}")
    streams = np.random.SeedSequence(seed).spawn(iters) if mode == "sampled" else None

    g = g0
    states = [g]
    J = [expected_fitness(g, L)]
    for k in range(iters):
        if mode == "analytic":
            grad = vanilla_grad(g, L)
        else:
            grad = estimate_search_gradient(g, L, m, streams[k], shaping, pairing)
        g = g.shifted(natural_grad(g, grad), step)
        states.append(g)
        J.append(expected_fitness(g, L))
    times = step * np.arange(iters + 1)
    return Trajectory(
        times,
        states,
        {"J": np.array(J), "traceC": np.array([np.trace(s.C) for s in states])},
    )
