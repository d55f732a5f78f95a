import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from replicator_geometry import flow_engine as fe
from replicator_geometry import gaussian_manifold as gm
from replicator_geometry import oracle as orc
from replicator_geometry.errors import NumericalError
from replicator_geometry.instances import random_gaussian, random_landscape

GD = orc.GridDensity


class TestGridDensity:
    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            GD([0.0, 1.0], [0.5, 0.6])
        with pytest.raises(ValueError):
            GD([0.0, 1.0], [1.5, -0.5])

    def test_rejects_nonuniform(self):
        with pytest.raises(ValueError):
            GD([0.0, 1.0, 3.0], [0.2, 0.3, 0.5])

    def test_discretized_normal_moments(self):
        mom = orc.grid_moments(GD.discretize_normal(0.0, 1.0, -8.0, 8.0, 2048))
        assert abs(mom.mean) <= 1e-6
        assert mom.variance == pytest.approx(1.0, abs=1e-6)
        assert abs(mom.skewness) <= 1e-6
        assert abs(mom.excess_kurtosis) <= 1e-6


class TestGridRhs:
    def test_hand_value(self):
        d = GD([-1.0, 0.0, 1.0], [0.25, 0.5, 0.25])
        np.testing.assert_allclose(orc.grid_replicator_rhs(d, 1.0, 0.0), [-0.125, 0.25, -0.125], atol=1e-15)

    def test_single_atom(self):
        w = np.zeros(5)
        w[2] = 1.0
        np.testing.assert_array_equal(orc.grid_replicator_rhs(GD(np.linspace(-1, 1, 5), w), 0.7, 1.3), 0.0)

    def test_symmetric_density_mean_fixed(self):
        d = GD.discretize_normal(0.0, 2.0, -5.0, 5.0, 101)
        assert abs(orc.grid_replicator_rhs(d, 0.5, 2.0) @ d.nodes) <= 1e-14

    @settings(max_examples=100, deadline=None)
    @given(arrays(float, st.integers(2, 50), elements=st.floats(0.0, 1.0)), st.floats(0.1, 3), st.floats(-3, 3))
    def test_mass_conserved(self, w, q, b):
        if w.sum() <= 0:
            w = np.ones_like(w)
        w = w / w.sum()
        if abs(w.sum() - 1) > 1e-12:
            return
        d = GD(np.linspace(-3, 3, w.size), w)
        assert abs(orc.grid_replicator_rhs(d, q, b).sum()) <= 1e-12


class TestGridMoments:
    def test_symmetric_skew(self):
        assert abs(orc.grid_moments(GD([-2.0, -1.0, 0.0, 1.0, 2.0], [0.1, 0.2, 0.4, 0.2, 0.1])).skewness) <= 1e-12

    def test_two_atoms(self):
        mom = orc.grid_moments(GD([-1.0, 0.0, 1.0], [0.5, 0.0, 0.5]))
        assert mom.variance == pytest.approx(1.0)
        assert mom.excess_kurtosis == pytest.approx(-2.0)

    def test_degenerate_flagged(self):
        mom = orc.grid_moments(GD([0.0, 1.0], [1.0, 0.0]))
        assert mom.degenerate and np.isnan(mom.skewness)


@pytest.fixture(scope="module")
def runs():
    """Grid runs on [-8, 8] and on the doubled domain at the same cell width."""
    out = {}
    for span in (8.0, 16.0):
        d0 = GD.discretize_normal(0.0, 1.0, -span, span, int(2048 * span / 8))
        out[span] = orc.integrate_grid(d0, 0.5, 0.0, 1e-3, 1.0, record_every=100)
    return out


class TestGridFlow:
    def test_stays_gaussian(self, runs):
        run = runs[8.0]
        m = run.moments[-1]
        assert m.variance == pytest.approx(fe.closed_form_covariance([[1.0]], [[0.5]], 1.0)[0, 0], abs=1e-3)
        assert abs(m.skewness) <= 1e-3
        assert abs(m.excess_kurtosis) <= 1e-2

    def test_drift_per_step(self, runs):
        assert runs[8.0].max_mass_drift < 1e-10

    def test_domain_doubling_insensitive(self, runs):
        a, b = runs[8.0].moments[-1], runs[16.0].moments[-1]
        assert abs(a.variance - b.variance) < 0.1 * 1e-3
        assert abs(a.skewness - b.skewness) < 0.1 * 1e-3
        assert abs(a.excess_kurtosis - b.excess_kurtosis) < 0.1 * 1e-2

    def test_mean_tracks_ode(self):
        L = gm.QuadBilinearLandscape([[0.5]], [[0.0]])
        run = orc.integrate_grid(GD.discretize_normal(0.5, 1.0, -7.5, 8.5, 2048), 0.5, 0.0, 1e-3, 1.0, 50)
        ode = fe.integrate(lambda g: gm.replicator_rhs_gaussian(g, L), gm.GaussianParams([0.5], [[1.0]]),
                           fe.FlowConfig(1e-3, 1.0, 50))
        np.testing.assert_allclose(ode.times, run.times)
        err = max(abs(m.mean - g.a[0]) for m, g in zip(run.moments, ode.states))
        assert err <= 1e-3


class TestFiniteDifferences:
    def test_linear_exact(self, instance):
        _, g = instance
        c = np.array([1.0, -2.0, 0.5])
        fd = orc.finite_diff_grad(lambda a, C: c @ a, g, 1e-5)
        np.testing.assert_allclose(fd.da, c, atol=1e-10)
        np.testing.assert_allclose(fd.dC, 0.0, atol=1e-10)

    def test_trace_objective(self, instance):
        _, g = instance
        M = np.array([[1.0, 2.0, 0.0], [2.0, -1.0, 0.5], [0.0, 0.5, 3.0]])
        fd = orc.finite_diff_grad(lambda a, C: np.sum(M * C), g, 1e-5)
        np.testing.assert_allclose(fd.dC, M, atol=1e-9)

    def test_matches_vanilla_grad(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 5))
            L, g = random_landscape(rng, n), random_gaussian(rng, n)
            fd = orc.finite_diff_grad(lambda a, C: gm.expected_fitness(gm.GaussianParams(a, C), L, opponent=g), g)
            exact = gm.vanilla_grad(g, L).flat()
            assert np.linalg.norm(fd.flat() - exact) <= 1e-6 * np.linalg.norm(exact)

    def test_h_refinement_quadratic(self):
        g = gm.GaussianParams([0.3], [[1.0]])
        f = lambda a, C: np.sin(a[0]) + np.log(C[0, 0])
        errs = [abs(orc.finite_diff_grad(f, g, h).da[0] - np.cos(0.3)) for h in (1e-3, 5e-4, 2.5e-4)]
        assert 3.5 <= errs[0] / errs[1] <= 4.5
        assert 3.5 <= errs[1] / errs[2] <= 4.5

    def test_rejects_h(self, instance):
        _, g = instance
        with pytest.raises(ValueError):
            orc.finite_diff_grad(lambda a, C: 0.0, g, 1e-2)

    def test_non_finite(self, instance):
        _, g = instance
        with pytest.raises(NumericalError):
            orc.finite_diff_grad(lambda a, C: np.inf, g)


class TestMonteCarlo:
    def test_trace_target(self):
        L = gm.QuadBilinearLandscape(np.eye(2), [[1.0, -2.0], [0.5, 3.0]])
        est = orc.mc_expectation(L, gm.GaussianParams(np.zeros(2), np.eye(2)), 10**6, seed=0)
        assert abs(est.mean + 2.0) <= 5 * est.stderr

    def test_random_instances(self, rng):
        for k in range(5):
            L, g = random_landscape(rng, 3), random_gaussian(rng, 3)
            est = orc.mc_expectation(L, g, 2 * 10**5, seed=k)
            assert abs(est.mean - gm.expected_fitness(g, L)) <= 5 * est.stderr

    def test_deterministic(self, instance):
        L, g = instance
        assert orc.mc_expectation(L, g, 1000, 4) == orc.mc_expectation(L, g, 1000, 4)

    def test_min_samples(self, instance):
        L, g = instance
        with pytest.raises(ValueError):
            orc.mc_expectation(L, g, 99, 0)


class TestSteepestAscent:
    def test_natural_direction_wins(self, rng):
        for _ in range(10):
            n = int(rng.integers(1, 4))
            L, g = random_landscape(rng, n), random_gaussian(rng, n)
            grad = gm.vanilla_grad(g, L)
            chk = orc.steepest_ascent_check(g, grad, gm.natural_grad(g, grad), count=2000, seed=0)
            assert chk.relative_excess <= 1e-6

    def test_vanilla_direction_loses(self, rng):
        # Euclidean gradient is not steepest in the Fisher metric for an anisotropic C
        L = gm.QuadBilinearLandscape(np.eye(2), np.zeros((2, 2)))
        g = gm.GaussianParams([1.0, 1.0], np.diag([5.0, 0.2]))
        grad = gm.vanilla_grad(g, L)
        assert orc.steepest_ascent_check(g, grad, grad, count=2000, seed=0).relative_excess > 0.01
