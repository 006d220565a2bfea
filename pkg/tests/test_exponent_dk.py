import math

import numpy as np
import pytest

from convexp import exponent_dk
from convexp.channel import Channel, Distribution, JointDistribution, random_channel
from convexp.errors import ConvergenceError, InfeasibleError, PreconditionError
from convexp.exponent_oh import g_ar_point, j_fun, maximize_j
from convexp.search import SearchOptions
from convexp.simplex import AscentOptions

LOG2 = math.log(2)
SMALL = SearchOptions(mu_points=9, rho_points=17, lambda_points=9)
DIAGONAL = JointDistribution(np.array([[0.5, 0.0], [0.0, 0.5]]))


class TestObjective:
    def test_identity_diagonal(self):
        value = exponent_dk.dk_objective(DIAGONAL, LOG2 + 0.2, 0.0, Channel.identity(2), 0.0, 1.0)
        assert value == pytest.approx(0.2, abs=1e-14)

    def test_off_support_is_infinite(self):
        q = JointDistribution(np.full((2, 2), 0.25))
        assert math.isinf(exponent_dk.dk_objective(q, 1.0, 0.0, Channel.identity(2), 0.0, 0.5))

    def test_lambda_range(self):
        with pytest.raises(PreconditionError):
            exponent_dk.dk_objective(DIAGONAL, 1.0, 0.0, Channel.identity(2), 0.0, 1.5)

    def test_evaluate_flags_budget(self):
        w = Channel.identity(2, cost=[0.0, 1.0])
        assert math.isinf(exponent_dk.evaluate_dk(DIAGONAL, 1.0, 0.2, w).value)
        assert exponent_dk.evaluate_dk(DIAGONAL, 1.0, 0.5, w).value == pytest.approx(1.0 - LOG2, abs=1e-14)


class TestMinimize:
    def test_identity(self):
        report = exponent_dk.minimize_dk(LOG2 + 0.3, 0.0, Channel.identity(2), 0.0, 1.0)
        assert report.value == pytest.approx(0.3, abs=1e-8)
        assert report.stationarity_gap <= 1e-9

    def test_lambda_zero_is_divergence_only(self):
        # minimized by q_{Y|X} = W at any input law
        report = exponent_dk.minimize_dk(1.0, 0.5, Channel.bsc(0.11, (0.0, 1.0)), 0.0, 0.0)
        assert report.value == pytest.approx(0.0, abs=1e-9)

    def test_matches_arimoto(self):
        rng = np.random.default_rng(23)
        for _ in range(5):
            w = random_channel(rng, 3, 3)
            gamma = float(w.gamma_0 + 0.5 * (w.gamma_max - w.gamma_0))
            mu, rho = rng.uniform(0.0, 1.5), rng.uniform(0.1, 0.8)
            dk = exponent_dk.minimize_dk(1.2, gamma, w, mu * rho, rho).value
            ar = g_ar_point(1.2, gamma, w, mu, rho, AscentOptions(kkt_tolerance=1e-11))
            assert dk == pytest.approx(ar, abs=1e-6)

    def test_reaches_default_tolerance(self):
        rng = np.random.default_rng(23)
        for _ in range(5):
            w = random_channel(rng, 3, 3)
            gamma = float(w.gamma_0 + 0.5 * (w.gamma_max - w.gamma_0))
            for mu, lam in ((0.0, 0.0625), (rng.uniform(0.0, 1.0), rng.uniform(0.1, 0.9))):
                report = exponent_dk.minimize_dk(1.2, gamma, w, mu, lam)
                assert report.stationarity_gap <= exponent_dk.MirrorOptions().stationarity_tolerance
                assert math.isfinite(report.value)

    def test_exhausted_iterations_raise(self):
        w = random_channel(np.random.default_rng(3), 3, 3)
        with pytest.raises(ConvergenceError):
            exponent_dk.minimize_dk(1.0, w.gamma_max, w, 0.3, 0.5, exponent_dk.MirrorOptions(max_iterations=1))


class TestDecomposition:
    def test_random_joints(self):
        rng = np.random.default_rng(29)
        for _ in range(10):
            w = random_channel(rng, 3, 3)
            q = JointDistribution.compose(rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3), size=3))
            lhs, rhs = exponent_dk.decomposition_check(q, w, rng.uniform(0, 2), rng.uniform(0.05, 0.95))
            assert lhs == pytest.approx(rhs, abs=1e-10 * max(1.0, abs(rhs)))

    def test_rejects_off_support_mass(self):
        q = JointDistribution(np.full((2, 2), 0.25))
        with pytest.raises(PreconditionError):
            exponent_dk.decomposition_check(q, Channel.identity(2), 0.0, 0.5)

    def test_backward_channel_identity(self):
        conditional, rows = exponent_dk.backward_channel(Distribution.uniform(2), Channel.identity(2),
                                                         0.0, 0.5)
        np.testing.assert_allclose(conditional, np.eye(2), atol=1e-15)
        np.testing.assert_allclose(rows, [1.0, 1.0], atol=1e-15)

    def test_backward_optimizer_is_stochastic(self):
        q = exponent_dk.backward_optimizer(Channel.bsc(0.11), 0.0, 0.5, AscentOptions(kkt_tolerance=1e-12))
        np.testing.assert_allclose(q.forward().sum(axis=1), [1.0, 1.0], atol=1e-10)
        crossover = q.forward()[0, 1]
        # the tilted backward channel is sharper than W
        assert 0.0 < crossover < 0.11

    def test_backward_optimizer_closes_decomposition(self):
        w = random_channel(np.random.default_rng(31), 3, 3)
        mu, rho = 0.7, 0.4
        tight = AscentOptions(kkt_tolerance=1e-11)
        q = exponent_dk.backward_optimizer(w, mu, rho, tight)
        best = maximize_j(w, mu, rho, tight).value
        lhs, rhs = exponent_dk.decomposition_check(q, w, mu, rho)
        assert lhs == pytest.approx(-best, abs=1e-9)
        assert rhs == pytest.approx(-best, abs=1e-9)
        # both divergence terms vanish: (1 - rho) D_back + D_out = rhs + J(q_X)
        assert rhs + j_fun(q.input_marginal, w, mu, rho) == pytest.approx(0.0, abs=1e-9)


class TestSup:
    @pytest.mark.slow
    def test_identity(self):
        report = exponent_dk.g_dk(LOG2 + 0.5, 0.0, Channel.identity(2), SMALL)
        assert report.value == pytest.approx(0.5, abs=1e-5)
        assert report.path in ("parametric", "direct")

    @pytest.mark.slow
    def test_mu_family_bounded_by_sup(self):
        w = Channel.bsc(0.11, (0.0, 1.0))
        family = exponent_dk.g_dk_mu(0.9, 0.4, w, 0.5, SMALL)
        assert family.value <= exponent_dk.g_dk(0.9, 0.4, w, SMALL).value + 1e-6

    def test_infeasible(self):
        with pytest.raises(InfeasibleError):
            exponent_dk.g_dk(1.0, 0.1, Channel.bsc(0.11, (0.5, 1.0)), SMALL)
