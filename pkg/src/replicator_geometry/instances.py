"""Random problem instances for property checks and benchmarks."""
from __future__ import annotations

import numpy as np

from .gaussian_manifold import GaussianParams, QuadBilinearLandscape
from .nes_engine import make_rng


def random_spd(rng: np.random.Generator, n: int, low: float = 0.5, high: float = 2.0) -> np.ndarray:
    """SPD matrix with eigenvalues drawn uniformly from ``[low, high]``."""
    Qm, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = rng.uniform(low, high, n)
    M = (Qm * lam) @ Qm.T
    return 0.5 * (M + M.T)


def random_landscape(rng: np.random.Generator, n: int, b_scale: float = 1.0) -> QuadBilinearLandscape:
    return QuadBilinearLandscape(random_spd(rng, n), b_scale * rng.standard_normal((n, n)))


def random_gaussian(rng: np.random.Generator, n: int) -> GaussianParams:
    return GaussianParams(rng.standard_normal(n), random_spd(rng, n))


def random_interior_point(rng: np.random.Generator, n: int) -> np.ndarray:
    """Dirichlet(1) draw pushed away from the boundary, normalized to sum 1."""
    p = rng.dirichlet(np.ones(n)) + 1e-3
    return p / p.sum()


def rng(seed) -> np.random.Generator:
    return make_rng(seed)
