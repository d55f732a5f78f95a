"""Self-check suite run by ``replicator-geometry verify``.

Each check returns a :class:`CheckResult` holding the measured quantity, the
threshold it is held to and a pass flag.
"""
from __future__ import annotations

import math
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, List

import numpy as np

from . import flow_engine as fe
from . import gaussian_manifold as gm
from . import nes_engine as nes
from . import oracle
from . import simplex_games as sg
from .instances import random_gaussian, random_interior_point, random_landscape, random_spd, rng


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: str
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.measured = float(self.measured)

    def as_dict(self):
        return asdict(self)


def _max_abs(t1: gm.ManifoldTangent, t2: gm.ManifoldTangent) -> float:
    return float(np.max(np.abs(t1.flat() - t2.flat())))


def check_natural_gradient_identity(count: int = 100, seed: int = 1) -> CheckResult:
    r = rng(seed)
    worst = 0.0
    for _ in range(count):
        n = int(r.integers(1, 6))
        L, g = random_landscape(r, n), random_gaussian(r, n)
        lhs = gm.natural_grad(g, gm.vanilla_grad(g, L))
        worst = max(worst, _max_abs(lhs, gm.replicator_rhs_gaussian(g, L)))
    return CheckResult("natural gradient of J equals Gaussian replicator field", worst <= 1e-10, worst, "<= 1e-10")


def check_closed_form_covariance(seed: int = 2, dt: float = 1e-3, t_end: float = 10.0) -> CheckResult:
    r = rng(seed)
    n = 3
    L = gm.QuadBilinearLandscape(random_spd(r, n), r.standard_normal((n, n)))
    C0 = random_spd(r, n)
    g0 = gm.GaussianParams(np.zeros(n), C0)
    traj = fe.integrate(lambda g: gm.replicator_rhs_gaussian(g, L), g0, fe.FlowConfig(dt, t_end, record_every=100))
    worst = 0.0
    for t, s in zip(traj.times, traj.states):
        exact = fe.closed_form_covariance(C0, L.Q, t)
        worst = max(worst, np.linalg.norm(s.C - exact) / np.linalg.norm(exact))
    return CheckResult("RK4 covariance matches closed form", worst <= 1e-6, worst, "<= 1e-6")


def check_large_t_covariance(seed: int = 3, t: float = 1e3) -> CheckResult:
    r = rng(seed)
    Q = random_spd(r, 3)
    C = fe.closed_form_covariance(random_spd(r, 3), Q, t)
    Qinv = np.linalg.inv(Q)
    err = float(np.linalg.norm(2 * t * C - Qinv) / np.linalg.norm(Qinv))
    return CheckResult("2t C(t) -> Q^-1 at t=1e3", err <= 0.02, err, "<= 0.02")


def check_acceleration() -> CheckResult:
    L = gm.QuadBilinearLandscape(0.5 * np.eye(2), np.zeros((2, 2)))
    g0 = gm.GaussianParams([1.0, -0.5], np.eye(2))
    diag = {"traceC": lambda s: float(np.trace(s.C))}
    plain = fe.integrate(lambda g: gm.replicator_rhs_gaussian(g, L), g0, fe.FlowConfig(0.1, 1000.0, record_every=10), diag)
    fast = fe.integrate(lambda g: nes.sigma_normalized_rhs(g, L), g0, fe.FlowConfig(0.01, 10.0, record_every=10), diag)
    fp, ff = fe.fit_convergence_rate(plain), fe.fit_convergence_rate(fast)
    ok = fp.model == "one-over-t" and ff.model == "exponential" and ff.rate > 0 and ff.r_squared >= 0.999
    return CheckResult(
        "replicator flow decays like 1/t, sigma-normalized flow exponentially",
        ok,
        ff.r_squared,
        "models (one-over-t, exponential), gamma > 0, R^2 >= 0.999",
        f"plain={fp.model}, normalized={ff.model}, gamma={ff.rate:.6g}",
    )


def score_estimator_instance(seed: int = 5):
    r = rng(seed)
    n = 2
    return random_landscape(r, n), random_gaussian(r, n)


def check_score_estimator(seed: int = 5, m: int = 100_000, replicates: int = 20) -> CheckResult:
    L, g = score_estimator_instance(seed)
    exact = gm.vanilla_grad(g, L).flat()
    scale = np.linalg.norm(exact)
    rel = np.linalg.norm(nes.estimate_search_gradient(g, L, m, seed).flat() - exact) / scale

    def rms_error(mm, ss):
        errs = [np.linalg.norm(nes.estimate_search_gradient(g, L, mm, s).flat() - exact) for s in ss]
        return math.sqrt(float(np.mean(np.square(errs))))

    streams = np.random.SeedSequence(seed).spawn(2 * replicates)
    ratio = rms_error(m, streams[:replicates]) / rms_error(4 * m, streams[replicates:])
    ok = rel <= 0.05 and 1.5 <= ratio <= 2.7
    return CheckResult(
        "score-function gradient estimate", ok, float(rel), "rel err <= 0.05, error ratio in [1.5, 2.7]",
        f"error ratio m -> 4m: {ratio:.4f}",
    )


def _halving_ratios(residual: Callable[[float], float], s0: float = 2e-2, halvings: int = 3):
    res = [residual(s0 / 2**k) for k in range(halvings + 1)]
    return [res[k] / res[k + 1] for k in range(halvings)]


def check_kl_expansion(seed: int = 6) -> CheckResult:
    r = rng(seed)
    p = r.dirichlet(np.full(4, 5.0))
    u = r.standard_normal(4)
    u -= u.mean()
    u /= np.linalg.norm(u)
    F = sg.fisher_categorical(p)

    def cat_res(s):
        d = s * u
        return abs(sg.kl_categorical(p + d, p) - 0.5 * d @ F @ d)

    g = random_gaussian(r, 3)
    X = r.standard_normal((3, 3))
    t = gm.ManifoldTangent(r.standard_normal(3), 0.5 * (X + X.T))

    def gauss_res(s):
        return abs(gm.kl_gaussian(g.shifted(t, s), g) - gm.fisher_quadratic_form(g, t * s))

    ratios = _halving_ratios(cat_res) + _halving_ratios(gauss_res)
    ok = all(6 <= x <= 10 for x in ratios)
    return CheckResult("KL residual decays cubically", ok, min(ratios), "halving ratios in [6, 10]",
                       "ratios " + ", ".join(f"{x:.3f}" for x in ratios))


def check_lyapunov() -> CheckResult:
    hd = fe.integrate(lambda p: sg.replicator_rhs(p, sg.HAWK_DOVE), sg.SimplexPoint([0.9, 0.1]),
                      fe.FlowConfig(1e-3, 50.0, record_every=100))
    V = sg.lyapunov_series([0.5, 0.5], hd)
    decreasing = bool(np.all(np.diff(V) < 0))
    dist = float(np.max(np.abs(hd.final.p - 0.5)))
    rps = fe.integrate(lambda p: sg.replicator_rhs(p, sg.ROCK_PAPER_SCISSORS), sg.SimplexPoint([0.5, 0.3, 0.2]),
                       fe.FlowConfig(1e-3, 100.0, record_every=100))
    W = sg.lyapunov_series(sg.SimplexPoint.uniform(3), rps)
    spread = float(W.max() - W.min())
    ok = decreasing and dist <= 1e-6 and spread <= 1e-6
    return CheckResult("KL to the ESS is a Lyapunov function", ok, max(dist, spread),
                       "hawk-dove strictly decreasing, |p(50) - 1/2| <= 1e-6, RPS spread <= 1e-6",
                       f"decreasing={decreasing}, dist={dist:.3g}, rps spread={spread:.3g}")


def check_shahshahani_identity(count: int = 100, seed: int = 8) -> CheckResult:
    r = rng(seed)
    worst = 0.0
    for _ in range(count):
        n = int(r.integers(2, 6))
        X = r.standard_normal((n, n))
        A = X + X.T
        p = random_interior_point(r, n)
        worst = max(worst, float(np.max(np.abs(sg.shahshahani_gradient(p, A @ p) - sg.replicator_rhs(p, A)))))
    return CheckResult("replicator field is the Shahshahani gradient", worst <= 1e-12, worst, "<= 1e-12")


def check_grid_oracle() -> CheckResult:
    d0 = oracle.GridDensity.discretize_normal(0.0, 1.0, -8.0, 8.0, 2048)
    m = oracle.integrate_grid(d0, 0.5, 0.0, 1e-3, 1.0, record_every=1000).moments[-1]
    d1 = oracle.GridDensity.discretize_normal(0.5, 1.0, -8.0, 8.0, 2048)
    run = oracle.integrate_grid(d1, 0.5, 0.0, 1e-3, 1.0, record_every=50)
    L = gm.QuadBilinearLandscape([[0.5]], [[0.0]])
    ode = fe.integrate(lambda g: gm.replicator_rhs_gaussian(g, L), gm.GaussianParams([0.5], [[1.0]]),
                       fe.FlowConfig(1e-3, 1.0, record_every=50))
    mean_err = max(abs(mm.mean - s.a[0]) for mm, s in zip(run.moments, ode.states))
    ok = abs(m.variance - 0.5) <= 1e-3 and abs(m.skewness) <= 1e-3 and abs(m.excess_kurtosis) <= 1e-2 and mean_err <= 1e-3
    return CheckResult("grid replicator keeps Gaussians Gaussian", ok, abs(m.variance - 0.5),
                       "|var - 0.5| <= 1e-3, |skew| <= 1e-3, |kurt| <= 1e-2, mean err <= 1e-3",
                       f"var={m.variance:.12g}, skew={m.skewness:.3g}, kurt={m.excess_kurtosis:.3g}, mean err={mean_err:.3g}")


def check_steepest_ascent(states: int = 20, count: int = 10_000, seed: int = 10) -> CheckResult:
    r = rng(seed)
    worst = -math.inf
    for k in range(states):
        n = int(r.integers(1, 4))
        L, g = random_landscape(r, n), random_gaussian(r, n)
        grad = gm.vanilla_grad(g, L)
        res = oracle.steepest_ascent_check(g, grad, gm.natural_grad(g, grad), 1e-4, count, seed=[seed, k])
        worst = max(worst, res.relative_excess)
    return CheckResult("natural gradient is the steepest ascent at fixed KL", worst <= 1e-6, worst,
                       "best random gain exceeds natural gain by <= 1e-6 relative")


def check_finite_differences(count: int = 20, seed: int = 11, h: float = 1e-5) -> CheckResult:
    r = rng(seed)
    worst = 0.0
    for _ in range(count):
        n = int(r.integers(1, 6))
        L, g = random_landscape(r, n), random_gaussian(r, n)
        fd = oracle.finite_diff_grad(lambda a, C: gm.expected_fitness(gm.GaussianParams(a, C), L, opponent=g), g, h)
        exact = gm.vanilla_grad(g, L)
        worst = max(worst, float(np.linalg.norm(fd.flat() - exact.flat()) / np.linalg.norm(exact.flat())))
    return CheckResult("finite differences of J match the vanilla gradient", worst <= 1e-6, worst, "<= 1e-6 relative")


REPRO_CONFIG = """\
experiment: nes-run
Q: [[1.0, 0.2], [0.2, 0.5]]
B: [[0.2, 0.3], [-0.3, 0.1]]
a0: [1.5, -1.0]
C0: [[1.0, 0.0], [0.0, 1.0]]
mode: sampled
m: 500
seed: 7
shaping: rank
truncation: 0.5
step: 0.05
iters: 20
"""


def check_reproducibility() -> CheckResult:
    from .cli import main

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cfg = tmp / "nes.yaml"
        cfg.write_text(REPRO_CONFIG)
        blobs = []
        for k in range(2):
            out = tmp / f"run{k}.csv"
            status = main(["run", str(cfg), "--output", str(out), "--format", "csv"])
            if status != 0:
                return CheckResult("identical config and seed give identical files", False, float(status), "status 0")
            blobs.append((out.read_bytes(), out.with_suffix(".report.json").read_bytes()))
    same = blobs[0] == blobs[1]
    return CheckResult("identical config and seed give identical files", same, float(same), "byte-identical")


ALL_CHECKS = [
    check_natural_gradient_identity,
    check_closed_form_covariance,
    check_large_t_covariance,
    check_acceleration,
    check_score_estimator,
    check_kl_expansion,
    check_lyapunov,
    check_shahshahani_identity,
    check_grid_oracle,
    check_steepest_ascent,
    check_finite_differences,
    check_reproducibility,
]


def run_all(checks=ALL_CHECKS) -> List[CheckResult]:
    return [c() for c in checks]
