import numpy as np
import pytest

from algorithms import EpochEntry, EpochSchedule, RunPlan, ScheduleScale, StepPolicy, step_size
from algorithms.cascade import CascadeQ, cq_run
from algorithms.qlearning import q_learning_run
from algorithms.schedules import schedule_expected
from algorithms.vrcq import vrcq_run
from algorithms.vrql import vr_q_learning_run
from harness import ConfigError, algorithm_manager
from mdp_core import deterministic_mdp, exact_optimal_q, garnet, make_mdp
from operators import bellman, linf_norm
from sampling import GenerativeModel, spawn_stream


def random_deterministic(seed, n=6, m=2, gamma=0.9):
    rng = np.random.default_rng(seed)
    return deterministic_mdp(rng.integers(0, n, size=(n, m)), rng.uniform(size=(n, m)), gamma)


def small_schedule(mdp, M=2, phi=0.9):
    return schedule_expected(phi, mdp.gamma, mdp.D, M, ScheduleScale(0.01, 0.01))


class TestStepSize:
    def test_rescaled_linear(self):
        policy = StepPolicy("rescaled_linear")
        assert step_size(policy, 10, 0.9) == pytest.approx(0.5)
        assert step_size(policy, 90, 0.9) == pytest.approx(0.1)

    def test_polynomial_starts_at_one(self):
        assert step_size(StepPolicy("polynomial", -0.7), 1, 0.9) == 1.0
        assert step_size(StepPolicy("polynomial", -0.5), 100, 0.9) == pytest.approx(0.1)

    @pytest.mark.parametrize("n", [1, 7, 10**6])
    def test_constant(self, n):
        assert step_size(StepPolicy("constant", 0.3), n, 0.5) == 0.3

    def test_index_starts_at_one(self):
        with pytest.raises(ValueError):
            step_size(StepPolicy("rescaled_linear"), 0, 0.9)


class TestStepPolicy:
    @pytest.mark.parametrize("text,expected", [
        ("constant:0.5", StepPolicy("constant", 0.5)),
        ("rescaled_linear", StepPolicy("rescaled_linear")),
        (" Polynomial:-0.5 ", StepPolicy("polynomial", -0.5)),
    ])
    def test_parse(self, text, expected):
        assert StepPolicy.parse(text) == expected

    @pytest.mark.parametrize("text", ["polynomial:0.5", "constant:2", "constant:0", "linear", "constant:abc", "rescaled_linear:1"])
    def test_parse_rejects(self, text):
        with pytest.raises(ValueError):
            StepPolicy.parse(text)

    def test_text_form(self):
        for text in ("constant:0.25", "rescaled_linear", "polynomial:-0.8"):
            assert str(StepPolicy.parse(text)) == text


class TestCascadeQ:
    def test_single_iteration_returns_start(self):
        mdp = garnet(5, 2, 3, seed=0, sigma_r=1.0)
        theta0 = np.random.default_rng(0).normal(size=mdp.dims)
        out = cq_run(mdp, spawn_stream(0, 0), theta0, 0.5, 1)
        np.testing.assert_array_equal(out.estimate, theta0)
        assert out.samples_used == 1

    @pytest.mark.parametrize("seed", range(20))
    @pytest.mark.parametrize("step", [0.1, 0.5])
    @pytest.mark.parametrize("n_iters", [100, 10_000])
    def test_noise_free_guarantee(self, seed, step, n_iters):
        mdp = random_deterministic(seed)
        theta_star = exact_optimal_q(mdp, 1e-12)
        theta0 = np.random.default_rng(seed).normal(scale=3.0, size=mdp.dims)
        out = cq_run(mdp, spawn_stream(seed, 0), theta0, step, n_iters)
        bound = 2 * linf_norm(theta0 - theta_star) / ((1 - mdp.gamma) * step * n_iters)
        assert linf_norm(out.estimate - theta_star) <= bound + 1e-9

    def test_checkpoints(self):
        mdp = garnet(5, 2, 3, seed=1)
        out = cq_run(mdp, spawn_stream(0, 0), None, 0.1, 50, oracle=exact_optimal_q(mdp), checkpoint_every=10)
        assert [s for s, _ in out.checkpoints] == [10, 20, 30, 40, 50]
        assert out.checkpoints[-1][1] == pytest.approx(linf_norm(out.estimate - exact_optimal_q(mdp)))

    def test_plan_checks(self):
        mdp = garnet(5, 2, 3, seed=1)
        with pytest.raises(ValueError):
            CascadeQ().run(mdp, spawn_stream(0, 0), RunPlan(n_iters=0))
        with pytest.raises(ValueError):
            CascadeQ().run(mdp, spawn_stream(0, 0), RunPlan(n_iters=10, step=StepPolicy("rescaled_linear")))

    def test_default_step(self):
        mdp = garnet(5, 2, 3, seed=1)
        default = CascadeQ().run(mdp, spawn_stream(3, 0), RunPlan(n_iters=400))
        explicit = cq_run(mdp, spawn_stream(3, 0), None, 400 ** -0.5, 400)
        np.testing.assert_array_equal(default.estimate, explicit.estimate)


class TestVarianceReducedCascadeQ:
    def test_empty_schedule(self):
        mdp = garnet(5, 2, 3, seed=2)
        theta0 = np.random.default_rng(2).normal(size=mdp.dims)
        stream = spawn_stream(0, 0)
        out = vrcq_run(mdp, stream, theta0, EpochSchedule(0.5, ()))
        np.testing.assert_array_equal(out.estimate, theta0)
        assert out.samples_used == 0 and stream.counter.draws == 0

    @pytest.mark.parametrize("seed", range(3))
    def test_noise_free_rate(self, seed):
        mdp = random_deterministic(seed, gamma=0.5)
        schedule = schedule_expected(0.5, mdp.gamma, mdp.D, 3)
        theta_star = exact_optimal_q(mdp, 1e-12)
        out = vrcq_run(mdp, spawn_stream(seed, 0), None, schedule)
        assert linf_norm(out.estimate - theta_star) <= 0.5 ** 3 * linf_norm(theta_star)

    def test_epoch_checkpoints_and_accounting(self):
        mdp = garnet(6, 2, 3, seed=3, sigma_r=0.5)
        schedule = small_schedule(mdp)
        stream = spawn_stream(0, 0)
        out = vrcq_run(mdp, stream, None, schedule, oracle=exact_optimal_q(mdp))
        first = schedule.entries[0]
        assert [s for s, _ in out.checkpoints] == [0, first.recenter + first.epoch_len, schedule.total_samples]
        assert out.samples_used == schedule.total_samples == stream.counter.draws


class TestQLearning:
    def test_unit_step_is_value_iteration(self):
        mdp = random_deterministic(4)
        theta0 = np.random.default_rng(4).normal(size=mdp.dims)
        theta_star = exact_optimal_q(mdp, 1e-12)
        out = q_learning_run(mdp, spawn_stream(0, 0), theta0, StepPolicy("constant", 1.0), 25)
        expected = theta0
        for _ in range(25): expected = bellman(mdp, expected)
        np.testing.assert_allclose(out.estimate, expected, rtol=1e-12, atol=1e-12)
        assert linf_norm(out.estimate - theta_star) <= mdp.gamma ** 25 * linf_norm(theta0 - theta_star) + 1e-9

    def test_polyak_average(self):
        mdp = random_deterministic(5)
        theta0 = np.random.default_rng(5).normal(size=mdp.dims)
        out = q_learning_run(mdp, spawn_stream(0, 0), theta0, StepPolicy("constant", 1.0), 3, pr_average=True)
        iterates = [bellman(mdp, theta0)]
        for _ in range(2): iterates.append(bellman(mdp, iterates[-1]))
        np.testing.assert_allclose(out.estimate, np.mean(iterates, axis=0), rtol=1e-12, atol=1e-12)

    def test_accounting(self):
        mdp = garnet(6, 2, 3, seed=3, sigma_r=0.5)
        stream = spawn_stream(0, 0)
        out = q_learning_run(mdp, stream, None, StepPolicy("rescaled_linear"), 123)
        assert out.samples_used == stream.counter.draws == 123


class TestVarianceReducedQLearning:
    @pytest.mark.parametrize("n_iters", [1, 10, 200])
    def test_noise_free_epoch(self, n_iters):
        mdp = random_deterministic(6)
        theta0 = np.random.default_rng(6).normal(scale=2.0, size=mdp.dims)
        theta_star = exact_optimal_q(mdp, 1e-12)
        out = vr_q_learning_run(mdp, spawn_stream(0, 0), theta0, EpochSchedule(0.5, (EpochEntry(1.0, n_iters, 3),)))
        bound = linf_norm(theta0 - theta_star) / ((1 - mdp.gamma) * n_iters + 1)
        assert linf_norm(out.estimate - theta_star) <= bound + 1e-9

    def test_empty_schedule(self):
        mdp = garnet(5, 2, 3, seed=2)
        theta0 = np.random.default_rng(7).normal(size=mdp.dims)
        out = vr_q_learning_run(mdp, spawn_stream(0, 0), theta0, EpochSchedule(0.5, ()))
        np.testing.assert_array_equal(out.estimate, theta0)
        assert out.samples_used == 0


class TestPlugins:
    def test_every_algorithm_is_registered(self):
        assert set(algorithm_manager().algorithms) == {"cq", "vrcq", "vrql", "ql", "ql_pr"}

    def test_unknown_name(self):
        with pytest.raises(ConfigError, match="unknown algorithm"):
            algorithm_manager().get("sarsa")

    def test_budget(self):
        mdp = garnet(6, 2, 3, seed=0)
        schedule = small_schedule(mdp)
        manager = algorithm_manager()
        assert manager.get("vrcq").budget(RunPlan(schedule=schedule)) == schedule.total_samples
        assert manager.get("ql").budget(RunPlan(n_iters=77)) == 77


def _plan(name, mdp):
    if algorithm_manager().get(name).epoch_based: return RunPlan(schedule=small_schedule(mdp))
    return RunPlan(n_iters=300, checkpoint_every=100)


class TestReproducibility:
    @pytest.mark.parametrize("name", ["cq", "vrcq", "vrql", "ql", "ql_pr"])
    def test_batched_trials_match_single_runs(self, name):
        mdp = garnet(6, 2, 3, seed=8, gamma=0.9, sigma_r=0.3)
        algorithm, plan, oracle = algorithm_manager().get(name), _plan(name, mdp), exact_optimal_q(mdp)
        streams = [spawn_stream(5, t) for t in range(3)]
        model = GenerativeModel(mdp, streams)
        batched = algorithm.run(mdp, model, plan, oracle)
        model.settle()
        for t in range(3):
            single = algorithm.run(mdp, spawn_stream(5, t), plan, oracle)
            np.testing.assert_array_equal(batched.estimate[t], single.estimate)
            assert [c[0] for c in batched.checkpoints] == [c[0] for c in single.checkpoints]
            assert [float(c[1][t]) for c in batched.checkpoints] == [c[1] for c in single.checkpoints]
            assert streams[t].counter.draws == single.samples_used == batched.samples_used

    @pytest.mark.parametrize("name", ["vrcq", "ql_pr"])
    def test_same_seed_same_estimate(self, name):
        mdp = garnet(6, 2, 3, seed=8, sigma_r=0.3)
        algorithm, plan = algorithm_manager().get(name), _plan(name, mdp)
        first = algorithm.run(mdp, spawn_stream(1, 4), plan)
        second = algorithm.run(mdp, spawn_stream(1, 4), plan)
        np.testing.assert_array_equal(first.estimate, second.estimate)
        assert not np.array_equal(first.estimate, algorithm.run(mdp, spawn_stream(1, 5), plan).estimate)

    @pytest.mark.parametrize("name", ["vrcq", "ql"])
    def test_reward_shift_moves_the_estimate(self, name):
        mdp = garnet(6, 2, 3, seed=9, sigma_r=0.3)
        shift = 2.0
        shifted = make_mdp(mdp.transitions, mdp.rewards + shift, mdp.gamma, mdp.sigma_r)
        theta0 = np.random.default_rng(9).normal(size=mdp.dims)
        offset = shift / (1 - mdp.gamma)
        algorithm, plan = algorithm_manager().get(name), _plan(name, mdp)
        base = algorithm.run(mdp, spawn_stream(2, 0), RunPlan(theta0, plan.schedule, plan.step, plan.n_iters))
        moved = algorithm.run(shifted, spawn_stream(2, 0), RunPlan(theta0 + offset, plan.schedule, plan.step, plan.n_iters))
        np.testing.assert_allclose(moved.estimate, base.estimate + offset, rtol=0, atol=1e-9)
