import numpy as np
import pytest

from mdp_core import MdpError, deterministic_mdp, exact_optimal_q, garnet, hard_two_state, policy_eval_direct
from operators import (bellman, complexity_measures, effective_variance, empirical_bellman, linf_norm, monte_carlo_bellman,
                       recentered_bellman, span_seminorm)
from sampling import GenerativeModel, draw_block, draw_sample, spawn_stream


@pytest.fixture
def cycle():
    return deterministic_mdp([[1, 2], [2, 0], [0, 1]], [[1.0, 0.0], [0.5, 2.0], [0.0, 1.0]], 0.9)


class TestBellman:
    def test_fixed_point(self):
        mdp = garnet(10, 3, 3, seed=2, gamma=0.9)
        q = exact_optimal_q(mdp, 1e-10)
        np.testing.assert_allclose(bellman(mdp, q), q, rtol=0, atol=1e-9)

    def test_zero_input_gives_rewards(self):
        mdp = garnet(6, 2, 2, seed=0)
        np.testing.assert_array_equal(bellman(mdp, np.zeros(mdp.dims)), mdp.rewards)

    def test_contraction_and_monotonicity(self):
        mdp = garnet(10, 3, 3, seed=1, gamma=0.95)
        rng = np.random.default_rng(0)
        for _ in range(100):
            q1 = rng.normal(scale=5.0, size=mdp.dims)
            q2 = rng.normal(scale=5.0, size=mdp.dims)
            assert linf_norm(bellman(mdp, q1) - bellman(mdp, q2)) <= mdp.gamma * linf_norm(q1 - q2) + 1e-12
            upper = q2 + np.abs(q1)
            assert (bellman(mdp, upper) >= bellman(mdp, q2) - 1e-12).all()

    def test_leading_trial_axis(self):
        mdp = garnet(5, 2, 3, seed=3)
        qs = np.random.default_rng(1).normal(size=(4,) + mdp.dims)
        batched = bellman(mdp, qs)
        assert batched.shape == qs.shape
        for t in range(4):
            np.testing.assert_allclose(batched[t], bellman(mdp, qs[t]), rtol=1e-13, atol=1e-13)


class TestEmpiricalBellman:
    def test_deterministic_instance_is_exact(self, cycle):
        q = np.random.default_rng(0).normal(size=cycle.dims)
        sample = draw_sample(cycle, spawn_stream(0, 0))
        np.testing.assert_array_equal(empirical_bellman(sample, q, cycle), bellman(cycle, q))

    def test_unbiased(self):
        mdp = garnet(5, 2, 3, seed=8, gamma=0.9, sigma_r=0.5)
        q = np.random.default_rng(2).uniform(0, 4, size=mdp.dims)
        K = 10**5
        mean = empirical_bellman(draw_block(mdp, spawn_stream(11, 0), K), q, mdp).mean(axis=0)
        sigma_bound = mdp.sigma_r + mdp.gamma * span_seminorm(q)
        np.testing.assert_allclose(mean, bellman(mdp, q), rtol=0, atol=4 * sigma_bound / np.sqrt(K))

    def test_contraction_on_a_fixed_sample(self):
        mdp = garnet(8, 2, 4, seed=4, gamma=0.9, sigma_r=1.0)
        rng = np.random.default_rng(3)
        stream = spawn_stream(0, 0)
        for _ in range(50):
            sample = draw_sample(mdp, stream)
            q1, q2 = rng.normal(size=mdp.dims), rng.normal(size=mdp.dims)
            assert linf_norm(empirical_bellman(sample, q1, mdp) - empirical_bellman(sample, q2, mdp)) <= mdp.gamma * linf_norm(q1 - q2) + 1e-12


class TestRecenteredBellman:
    def test_anchor_maps_to_anchor_image(self):
        mdp = garnet(6, 2, 3, seed=5, sigma_r=0.4)
        rng = np.random.default_rng(4)
        anchor, image = rng.normal(size=mdp.dims), rng.normal(size=mdp.dims)
        sample = draw_sample(mdp, spawn_stream(1, 0))
        np.testing.assert_array_equal(recentered_bellman(sample, anchor, anchor, image, mdp), image)

    def test_matches_difference_of_empirical_images(self):
        mdp = garnet(6, 2, 3, seed=5, sigma_r=0.4)
        rng = np.random.default_rng(5)
        q, anchor, image = (rng.normal(size=mdp.dims) for _ in range(3))
        sample = draw_sample(mdp, spawn_stream(1, 0))
        expected = empirical_bellman(sample, q, mdp) - empirical_bellman(sample, anchor, mdp) + image
        np.testing.assert_allclose(recentered_bellman(sample, q, anchor, image, mdp), expected, rtol=1e-12, atol=1e-12)

    def test_noise_free_collapse(self, cycle):
        rng = np.random.default_rng(6)
        q, anchor = rng.normal(size=cycle.dims), rng.normal(size=cycle.dims)
        sample = draw_sample(cycle, spawn_stream(0, 0))
        np.testing.assert_allclose(recentered_bellman(sample, q, anchor, bellman(cycle, anchor), cycle), bellman(cycle, q), rtol=1e-12, atol=1e-12)

    def test_variance_shrinks_near_the_anchor(self):
        mdp = garnet(6, 2, 3, seed=7, gamma=0.9, sigma_r=2.0)
        rng = np.random.default_rng(7)
        anchor = rng.normal(size=mdp.dims)
        q = anchor + rng.uniform(-0.1, 0.1, size=mdp.dims)
        block = draw_block(mdp, spawn_stream(2, 0), 10**4)
        values = recentered_bellman(block, q, anchor, bellman(mdp, anchor), mdp)
        assert (values.var(axis=0) <= mdp.gamma ** 2 * linf_norm(q - anchor) ** 2 + 1e-12).all()


class TestMonteCarloBellman:
    def test_deterministic_instance(self, cycle):
        anchor = np.random.default_rng(8).normal(size=cycle.dims)
        np.testing.assert_allclose(monte_carlo_bellman(cycle, anchor, 17, spawn_stream(0, 0)), bellman(cycle, anchor), rtol=1e-12, atol=1e-12)

    def test_single_draw_is_one_empirical_image(self):
        mdp = garnet(6, 2, 3, seed=9)
        anchor = np.random.default_rng(9).normal(size=mdp.dims)
        expected = empirical_bellman(draw_sample(mdp, spawn_stream(4, 2)), anchor, mdp)
        np.testing.assert_array_equal(monte_carlo_bellman(mdp, anchor, 1, spawn_stream(4, 2)), expected)

    def test_counts_draws(self):
        mdp = garnet(4, 2, 2, seed=0)
        stream = spawn_stream(0, 0)
        monte_carlo_bellman(mdp, np.zeros(mdp.dims), 25, stream)
        assert stream.counter.draws == 25
        model = GenerativeModel(mdp, stream)
        monte_carlo_bellman(mdp, np.zeros(mdp.dims), 5, model)
        assert model.draws == 5 and stream.counter.draws == 25

    def test_needs_a_draw(self):
        mdp = garnet(4, 2, 2, seed=0)
        with pytest.raises(ValueError):
            monte_carlo_bellman(mdp, np.zeros(mdp.dims), 0, spawn_stream(0, 0))

    def test_error_rate(self):
        mdp = garnet(8, 1, 3, seed=10, gamma=0.9, sigma_r=0.5)
        trials = 200
        anchor = np.broadcast_to(np.random.default_rng(10).uniform(0, 5, size=mdp.dims), (trials,) + mdp.dims)
        target = bellman(mdp, anchor)
        sizes = [100, 1000, 10000]
        errors = []
        for i, n in enumerate(sizes):
            model = GenerativeModel(mdp, [spawn_stream(100 + i, t) for t in range(trials)])
            errors.append(np.mean(linf_norm(monte_carlo_bellman(mdp, anchor, n, model) - target)))
        slope = np.polyfit(np.log(sizes), np.log(errors), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.1)


class TestNorms:
    def test_small_table(self):
        q = np.array([[1.0, 3.0], [0.0, 2.0]])
        assert linf_norm(q) == 3.0
        assert span_seminorm(q) == 3.0

    def test_constant_table(self):
        q = np.full((3, 2), -2.5)
        assert linf_norm(q) == 2.5
        assert span_seminorm(q) == 0.0

    def test_span_at_most_twice_linf(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            q = rng.normal(size=(4, 3)) + rng.normal()
            assert span_seminorm(q) <= 2 * linf_norm(q)

    def test_per_trial_reduction(self):
        q = np.array([[[1.0, 3.0], [0.0, 2.0]], [[-4.0, 0.0], [0.0, 0.0]]])
        np.testing.assert_array_equal(linf_norm(q), [3.0, 4.0])
        np.testing.assert_array_equal(span_seminorm(q), [3.0, 4.0])


class TestEffectiveVariance:
    def test_deterministic_instance(self, cycle):
        q = np.random.default_rng(12).normal(size=cycle.dims)
        sigma = effective_variance(cycle, q)
        np.testing.assert_array_equal(sigma.values, np.zeros(cycle.dims))
        assert sigma.norm == 0.0

    @pytest.mark.parametrize("gamma,beta", [(0.9, 0.0), (0.96, 0.2), (0.99, 0.5)])
    def test_two_point_variance(self, gamma, beta):
        mdp = hard_two_state(gamma, beta)
        theta = policy_eval_direct(mdp)
        p = mdp.transitions[0, 0, 0]
        sigma = effective_variance(mdp, theta)
        assert sigma.values[0, 0] == pytest.approx(gamma ** 2 * p * (1 - p) * theta[0, 0] ** 2, rel=1e-10)
        assert sigma.values[1, 0] == 0.0

    @pytest.mark.parametrize("seed", range(10))
    def test_popoviciu_bound(self, seed):
        mdp = garnet(12, 3, 4, seed=seed, gamma=0.95)
        q = np.random.default_rng(seed).normal(scale=3.0, size=mdp.dims)
        values = q.max(axis=-1)
        bound = mdp.gamma ** 2 * (values.max() - values.min()) ** 2 / 4
        assert (effective_variance(mdp, q).values <= bound + 1e-12).all()


def _closed_form_v(gamma, beta):
    p = (4 * gamma - 1) / (3 * gamma)
    theta = (1 - gamma) ** beta * 3 / (4 * (1 - gamma))
    return np.sqrt(p * (1 - p)) * theta / (1 - gamma * p), theta


class TestComplexityMeasures:
    @pytest.mark.parametrize("gamma", [0.9, 0.95, 0.97, 0.99, 0.997])
    @pytest.mark.parametrize("beta", [0.0, 0.2, 0.3, 0.5])
    def test_two_state_closed_form(self, gamma, beta):
        measures = complexity_measures(hard_two_state(gamma, beta))
        v, theta = _closed_form_v(gamma, beta)
        assert measures.v == pytest.approx(v, rel=1e-12)
        assert measures.span_theta == pytest.approx(theta, rel=1e-12)
        assert measures.rho == 0.0

    @pytest.mark.parametrize("beta", [0.0, 0.2, 0.5, 1.0])
    def test_horizon_exponent(self, beta):
        gammas = np.linspace(0.9, 0.997, 12)
        v = [complexity_measures(hard_two_state(g, beta)).v for g in gammas]
        slope = np.polyfit(np.log(1 / (1 - gammas)), np.log(v), 1)[0]
        assert slope == pytest.approx(1.5 - beta, abs=0.02)

    def test_reward_noise_term(self):
        mdp = garnet(6, 1, 2, seed=0, gamma=0.9, sigma_r=0.5)
        measures = complexity_measures(mdp)
        assert measures.rho > 0
        noiseless = complexity_measures(garnet(6, 1, 2, seed=0, gamma=0.9))
        assert noiseless.rho == 0.0
        assert noiseless.v == pytest.approx(measures.v, rel=1e-12)

    def test_needs_one_action(self):
        with pytest.raises(MdpError):
            complexity_measures(garnet(4, 2, 2, seed=0))
