import numpy as np
import pytest

from replicator_geometry import flow_engine as fe
from replicator_geometry import gaussian_manifold as gm
from replicator_geometry import simplex_games as sg
from replicator_geometry.errors import BoundaryError, NotPositiveDefiniteError, NumericalError
from replicator_geometry.instances import random_spd
from replicator_geometry.nes_engine import sigma_normalized_rhs


def gaussian_flow(L, g0, dt, t_end, record_every=1, rhs=gm.replicator_rhs_gaussian):
    return fe.integrate(lambda g: rhs(g, L), g0, fe.FlowConfig(dt, t_end, record_every),
                        diagnostics={"traceC": lambda g: np.trace(g.C)})


class TestFlowConfig:
    @pytest.mark.parametrize("kw", [dict(dt=0.0, t_end=1.0), dict(dt=0.1, t_end=-1.0),
                                    dict(dt=0.1, t_end=1.0, record_every=0),
                                    dict(dt=0.1, t_end=1.0, boundary_eps=1e-3)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            fe.FlowConfig(**kw)

    def test_steps(self):
        assert fe.FlowConfig(1e-3, 10.0).n_steps == 10_000


class TestTrajectory:
    def test_times_increasing(self):
        with pytest.raises(ValueError):
            fe.Trajectory([0.0, 0.0], [1, 2])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            fe.Trajectory([0.0, 1.0], [1])
        with pytest.raises(ValueError):
            fe.Trajectory([0.0, 1.0], [1, 2], {"J": [0.0]})


class TestIntegrate:
    def test_zero_field_constant(self):
        traj = fe.integrate(lambda y: np.zeros(3), np.array([1.0, 2.0, 3.0]), fe.FlowConfig(0.1, 1.0))
        assert len(traj) == 11
        for s in traj.states:
            np.testing.assert_array_equal(s, [1.0, 2.0, 3.0])

    def test_sampling(self):
        traj = fe.integrate(lambda y: -y, np.array([1.0]), fe.FlowConfig(0.1, 1.1, record_every=3))
        np.testing.assert_allclose(traj.times, [0.0, 0.3, 0.6, 0.9, 1.1])

    def test_scalar_gaussian_closed_form(self):
        L = gm.QuadBilinearLandscape([[0.5]], [[0.0]])
        traj = gaussian_flow(L, gm.GaussianParams([0.0], [[1.0]]), 1e-3, 1.0, record_every=100)
        assert traj.final.C[0, 0] == pytest.approx(0.5, abs=1e-6)

    def test_hawk_dove_reaches_ess(self):
        traj = fe.integrate(lambda p: sg.replicator_rhs(p, sg.HAWK_DOVE), sg.SimplexPoint([0.9, 0.1]),
                            fe.FlowConfig(1e-2, 50.0, record_every=100))
        np.testing.assert_allclose(traj.final.p, [0.5, 0.5], atol=1e-6)

    def test_boundary_event(self):
        # strategy 1 strictly dominates; p_2 decays to the guard
        with pytest.raises(BoundaryError, match="boundary event"):
            fe.integrate(lambda p: sg.replicator_rhs(p, np.array([[1.0, 1.0], [0.0, 0.0]])),
                         sg.SimplexPoint([0.5, 0.5]), fe.FlowConfig(1e-2, 100.0))

    def test_spd_violation_suggests_smaller_dt(self):
        L = gm.QuadBilinearLandscape([[0.5]], [[0.0]])
        with pytest.raises(NotPositiveDefiniteError, match="smaller dt"):
            gaussian_flow(L, gm.GaussianParams([0.0], [[1.0]]), 10.0, 20.0)

    def test_non_finite(self):
        with pytest.raises(NumericalError), np.errstate(over="ignore", invalid="ignore"):
            fe.integrate(lambda y: y * y, np.array([1.0]), fe.FlowConfig(0.5, 10.0))

    def test_covariance_stays_spd_and_symmetric(self, rng):
        n = 3
        X = rng.standard_normal((n, n))
        L = gm.QuadBilinearLandscape(random_spd(rng, n), 0.3 * X)
        traj = gaussian_flow(L, gm.GaussianParams(rng.standard_normal(n), random_spd(rng, n)), 1e-2, 20.0, 50)
        for g in traj.states:
            np.testing.assert_array_equal(g.C, g.C.T)
            assert np.min(np.linalg.eigvalsh(g.C)) > 0

    def test_rk4_fourth_order(self, rng):
        Q, C0 = random_spd(rng, 3), random_spd(rng, 3)
        L = gm.QuadBilinearLandscape(Q, np.zeros((3, 3)))
        g0 = gm.GaussianParams(np.zeros(3), C0)

        def max_err(dt):
            traj = gaussian_flow(L, g0, dt, 2.0)
            return max(np.linalg.norm(g.C - fe.closed_form_covariance(C0, Q, t))
                       for t, g in zip(traj.times, traj.states))

        ratio = max_err(0.025) / max_err(0.0125)
        assert 12 <= ratio <= 20

    def test_simplex_sum_conserved(self, rng):
        A = sg.ROCK_PAPER_SCISSORS - 0.1 * np.eye(3)
        traj = fe.integrate(lambda p: sg.replicator_rhs(p, A), sg.SimplexPoint(rng.dirichlet(np.full(3, 5.0))),
                            fe.FlowConfig(1e-2, 100.0, record_every=100))
        for s in traj.states:
            assert abs(s.p.sum() - 1) <= 1e-9


class TestClosedFormCovariance:
    def test_t_zero(self, spd3, rng):
        C0 = random_spd(rng, 3)
        np.testing.assert_allclose(fe.closed_form_covariance(C0, spd3, 0.0), C0, rtol=1e-12)

    @pytest.mark.parametrize("t, expected", [(1.0, 0.5), (9.0, 0.1)])
    def test_scalar(self, t, expected):
        assert fe.closed_form_covariance([[1.0]], [[0.5]], t)[0, 0] == pytest.approx(expected, rel=1e-14)

    def test_large_t_law(self, spd3, rng):
        C = fe.closed_form_covariance(random_spd(rng, 3), spd3, 1e3)
        Qi = np.linalg.inv(spd3)
        assert np.linalg.norm(2e3 * C - Qi) / np.linalg.norm(Qi) <= 0.02

    def test_negative_time(self):
        with pytest.raises(ValueError):
            fe.closed_form_covariance([[1.0]], [[1.0]], -1.0)


class TestClassifyAsymptotics:
    def test_identity(self):
        rep = fe.classify_asymptotics(gm.QuadBilinearLandscape(np.eye(3), np.zeros((3, 3))))
        np.testing.assert_allclose(rep.eigenvalues, -2.0)
        assert rep.converges_to_delta_at_zero

    def test_scalar_unstable(self):
        rep = fe.classify_asymptotics(gm.QuadBilinearLandscape([[0.5]], [[3.0]]))
        assert rep.eigenvalues[0] == pytest.approx(2.0)
        assert not rep.converges_to_delta_at_zero

    def test_rotation(self):
        rep = fe.classify_asymptotics(gm.QuadBilinearLandscape(np.eye(2), [[0.0, -4.0], [4.0, 0.0]]))
        np.testing.assert_allclose(sorted(rep.eigenvalues, key=lambda z: z.imag), [-2 - 4j, -2 + 4j])
        assert rep.converges_to_delta_at_zero

    def test_flag_implies_collapse(self):
        Q = np.array([[3.0, 0.5], [0.5, 2.5]])
        B = np.array([[0.0, 0.3], [-0.3, 0.0]])
        L = gm.QuadBilinearLandscape(Q, B)
        assert fe.classify_asymptotics(L).converges_to_delta_at_zero
        assert np.all(np.linalg.eigvalsh(Q) > 1.9) and np.all(np.linalg.eigvalsh(Q) < 4.0)
        traj = gaussian_flow(L, gm.GaussianParams([1.0, -0.5], np.eye(2)), 0.05, 1e3, record_every=1000)
        assert np.linalg.norm(traj.final.a) < 1e-3
        assert np.trace(traj.final.C) < 1e-3


class TestFitConvergenceRate:
    def test_exact_exponential(self):
        k = np.arange(100.0)
        fit = fe.fit_convergence_rate(k, np.exp(-k / 10))
        assert fit.model == "exponential"
        assert fit.rate == pytest.approx(0.1, abs=1e-8)

    def test_exact_one_over_t(self):
        t = np.linspace(1.0, 100.0, 50)
        fit = fe.fit_convergence_rate(t, 3.0 / t)
        assert fit.model == "one-over-t"
        assert fit.rate == pytest.approx(3.0, rel=1e-10)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            fe.fit_convergence_rate(np.arange(1.0, 10.0), np.ones(9))

    def test_degenerate(self):
        t = np.arange(1.0, 41.0)
        with pytest.raises(NumericalError):
            fe.fit_convergence_rate(t, np.full(40, 1e-20))

    def test_flows(self):
        L = gm.QuadBilinearLandscape(0.5 * np.eye(2), np.zeros((2, 2)))
        g0 = gm.GaussianParams([1.0, -0.5], np.eye(2))
        plain = fe.fit_convergence_rate(gaussian_flow(L, g0, 0.1, 1000.0, 10))
        assert plain.model == "one-over-t"
        fast = fe.fit_convergence_rate(gaussian_flow(L, g0, 0.01, 10.0, rhs=sigma_normalized_rhs))
        assert fast.model == "exponential"
        assert fast.rate > 0
        assert fast.r_squared >= 0.999
