"""Fixed-step integration of the replicator flows and asymptotic diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from .errors import BoundaryError, NotPositiveDefiniteError, NumericalError
from .gaussian_manifold import (
    GaussianParams,
    ManifoldTangent,
    QuadBilinearLandscape,
    spd_inverse,
)
from .simplex_games import SimplexPoint


@dataclass(frozen=True)
class FlowConfig:
    dt: float
    t_end: float
    record_every: int = 1
    boundary_eps: float = 1e-9

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError(f"record_every must be an integer >= 1, got {self.record_every}")
        if not 0 < self.boundary_eps <= 1e-6:
            raise ValueError(f"boundary_eps must lie in (0, 1e-6], got {self.boundary_eps}")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))


@dataclass
class Trajectory:
    """Sampled states of a flow plus named per-sample diagnostics."""

    times: np.ndarray
    states: list
    diagnostics: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.states) != self.times.size:
            raise ValueError("times and states differ in length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        self.diagnostics = {k: np.asarray(v, dtype=float) for k, v in self.diagnostics.items()}
        for k, v in self.diagnostics.items():
            if v.shape != self.times.shape:
                raise ValueError(f"diagnostic {k!r} has {v.size} samples, expected {self.times.size}")

    def __len__(self):
        return self.times.size

    @property
    def final(self):
        return self.states[-1]


@dataclass(frozen=True)
class RateFit:
    model: str  # "one-over-t" | "exponential"
    rate: float
    r_squared: float
    rss_one_over_t: float
    rss_exponential: float


@dataclass(frozen=True)
class AsymptoticReport:
    eigenvalues: np.ndarray
    converges_to_delta_at_zero: bool
    fitted_rate: Optional[RateFit] = None


# -- state packing ----------------------------------------------------------

class _VectorCodec:
    def __init__(self, x0):
        self.n = np.asarray(x0).size

    def pack(self, x):
        return np.array(x, dtype=float).ravel()

    def unpack(self, y):
        return y

    def pack_tangent(self, v):
        return np.asarray(v, dtype=float).ravel()


class _SimplexCodec(_VectorCodec):
    def __init__(self, x0, eps):
        super().__init__(x0)
        self.eps = eps

    def pack(self, x):
        return np.array(x.p if isinstance(x, SimplexPoint) else x, dtype=float)

    def unpack(self, y):
        return y

    def accept(self, y, t, record=True):
        # the field is tangent, so any drift of sum(p) is pure roundoff
        y /= y.sum()
        if not y.min() >= self.eps:
            i = int(np.argmin(y))
            raise BoundaryError(f"boundary event at t={t:.6g}: p_{i + 1} = {y[i]:.3g}")
        return SimplexPoint(y) if record else None


class _GaussianCodec:
    def __init__(self, g0: GaussianParams):
        self.n = g0.n

    def pack(self, g: GaussianParams):
        return np.concatenate([g.a, g.C.ravel()])

    def unpack(self, y) -> GaussianParams:
        n = self.n
        return GaussianParams(y[:n], y[n:].reshape(n, n))

    def pack_tangent(self, t: ManifoldTangent):
        return np.concatenate([t.da, t.dC.ravel()])

    def accept(self, y, t, record=True):
        return self.unpack(y)


def _codec(state0, cfg):
    if isinstance(state0, GaussianParams):
        return _GaussianCodec(state0)
    if isinstance(state0, SimplexPoint):
        return _SimplexCodec(state0, cfg.boundary_eps)
    return _VectorCodec(state0)


def integrate(
    rhs: Callable,
    state0,
    cfg: FlowConfig,
    diagnostics: Optional[Dict[str, Callable]] = None,
) -> Trajectory:
    """Classical RK4 with fixed step ``cfg.dt`` up to ``cfg.t_end``.

    ``state0`` is a :class:`SimplexPoint`, a :class:`GaussianParams` or a plain
    vector.  ``rhs(state)`` returns the time derivative (a vector, or a
    :class:`ManifoldTangent` for Gaussian states).  Samples are stored every
    ``cfg.record_every`` steps and at the final step.  ``diagnostics`` maps names
    to functions of the state evaluated at every sample.

    Raises :class:`BoundaryError` when a simplex component drops below
    ``cfg.boundary_eps``, :class:`NotPositiveDefiniteError` when a covariance
    loses positive definiteness, :class:`NumericalError` on non-finite values.
    """
    codec = _codec(state0, cfg)
    diagnostics = diagnostics or {}
    gaussian = isinstance(codec, _GaussianCodec)
    accept = getattr(codec, "accept", None)

    def f(y, t):
        try:
            v = rhs(codec.unpack(y))
        except NotPositiveDefiniteError as exc:
            raise NotPositiveDefiniteError(
                f"covariance lost positive definiteness near t={t:.6g}; try a smaller dt ({cfg.dt:g})"
            ) from exc
        return codec.pack_tangent(v)

    dt = cfg.dt
    n_steps = cfg.n_steps
    y = codec.pack(state0)
    state = accept(y, 0.0) if accept is not None else y.copy()
    times: List[float] = [0.0]
    states: list = [state]
    diag: Dict[str, List[float]] = {k: [float(fn(state))] for k, fn in diagnostics.items()}

    for k in range(1, n_steps + 1):
        t = (k - 1) * dt
        k1 = f(y, t)
        k2 = f(y + 0.5 * dt * k1, t)
        k3 = f(y + 0.5 * dt * k2, t)
        k4 = f(y + dt * k3, t)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"non-finite state at t={k * dt:.6g}")
        if gaussian:
            n = codec.n
            C = y[n:].reshape(n, n)
            y[n:] = (0.5 * (C + C.T)).ravel()
        record = k % cfg.record_every == 0 or k == n_steps
        if accept is not None:
            try:
                state = accept(y, k * dt, record)
            except NotPositiveDefiniteError as exc:
                raise NotPositiveDefiniteError(
                    f"covariance lost positive definiteness at t={k * dt:.6g}; try a smaller dt ({dt:g})"
                ) from exc
        elif record:
            state = y.copy()
        if record:
            times.append(k * dt)
            states.append(state)
            for name, fn in diagnostics.items():
                diag[name].append(float(fn(state)))
    return Trajectory(np.array(times), states, {k: np.array(v) for k, v in diag.items()})


def closed_form_covariance(C0, Q, t: float) -> np.ndarray:
    """Exact covariance of the replicator flow: ``(C0^-1 + 2 t Q)^-1``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    C0 = np.atleast_2d(np.asarray(C0, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    return spd_inverse(spd_inverse(C0, "C0") + 2.0 * t * Q, "C0^-1 + 2tQ")


def classify_asymptotics(L: QuadBilinearLandscape) -> AsymptoticReport:
    """Spectrum of ``B - 2Q``; the flow collapses to a point mass at 0 when
    every eigenvalue has negative real part."""
    try:
        eig = np.linalg.eigvals(L.B - 2.0 * L.Q)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("eigenvalue computation failed") from exc
    order = np.lexsort((eig.imag, eig.real))
    eig = eig[order]
    return AsymptoticReport(eig, bool(np.all(eig.real < 0)))


def trace_series(traj: Trajectory) -> np.ndarray:
    if "traceC" in traj.diagnostics:
        return traj.diagnostics["traceC"]
    return np.array([np.trace(s.C) for s in traj.states])


def fit_convergence_rate(traj: Union[Trajectory, Sequence], traces=None) -> RateFit:
    """Decide whether ``trace C(t)`` decays like ``1/t`` or exponentially.

    Both ``ln tr C = beta - ln t`` and ``ln tr C = alpha - gamma t`` are fitted by
    least squares on the second half of the samples; the model with the
    smaller residual sum of squares wins.  ``rate`` is ``gamma`` for the
    exponential model and ``exp(beta)`` (the limit of ``t tr C``) otherwise.

    Accepts a :class:`Trajectory` of Gaussian states, or ``(times, traces)``.
    """
    if traces is None:
        times, traces = traj.times, trace_series(traj)
    else:
        times = np.asarray(traj, dtype=float)
    times = np.asarray(times, dtype=float)
    traces = np.asarray(traces, dtype=float)
    if times.size < 20:
        raise ValueError(f"need at least 20 samples, got {times.size}")
    t = times[times.size // 2:]
    c = traces[times.size // 2:]
    if np.any(~np.isfinite(c)) or np.any(c < 1e-14):
        raise NumericalError("degenerate trajectory: trace below 1e-14 in the fit window")
    if np.any(t <= 0):
        raise ValueError("fit window must have positive times")
    y = np.log(c)
    ss_tot = float(np.sum((y - y.mean()) ** 2))

    beta = float(np.mean(y + np.log(t)))
    rss_a = float(np.sum((y - (beta - np.log(t))) ** 2))

    slope, intercept = np.polyfit(t, y, 1)
    rss_b = float(np.sum((y - (intercept + slope * t)) ** 2))

    def r2(rss):
        return 1.0 - rss / ss_tot if ss_tot > 0 else 1.0

    if rss_b < rss_a:
        return RateFit("exponential", float(-slope), r2(rss_b), rss_a, rss_b)
    return RateFit("one-over-t", float(np.exp(beta)), r2(rss_a), rss_a, rss_b)
