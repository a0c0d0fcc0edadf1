import math
import os
from unittest import skipUnless

import numpy as np
from django.test import SimpleTestCase

from actions.space import (DEFAULT_SPECS, SME_BASELINE, SPECS_BY_NAME,
                           SamplingMode, decode_action, sample_candidate,
                           validate)
from kpi.constraints import check_constraints
from kpi.features import FEATURE_LENGTH
from scheduler.scenario import load_scenario

from .cem import (CandidateOrigin, SearchDistribution, SeedingMix,
                  elite_update, epoch_rng, extra_noise, init_distribution,
                  reward_statistics, run_epoch, sample_population,
                  select_elite)
from .environment import (EnvConfig, EnvironmentInfeasibleError,
                          SchedulerEnv, session_seed)
from .policy import DEFAULT_SHAPE, PolicyShape, grounded_weights, policy_forward

RUN_SLOW_TESTS = bool(os.getenv("RUN_SLOW_TESTS"))


def with_params(**overrides):
    values = SME_BASELINE.as_dict()
    values.update(overrides)
    return validate(values)


def short_env(
    duration_s=3.0, x_seconds=1, y_seconds=0, retries=1, scenario=None, base_seed=5
):
    return SchedulerEnv(
        EnvConfig(
            scenario=scenario or load_scenario(),
            session_duration_s=duration_s,
            x_seconds=x_seconds,
            y_seconds=y_seconds,
            max_constraint_retries=retries,
            base_seed=base_seed,
        )
    )


class PolicyTestCase(SimpleTestCase):
    """
    Тесты MLP политики.
    """

    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_weight_count(self):
        self.assertEqual(DEFAULT_SHAPE.weight_count, 312 * 16 + 16 + 16 * 10 + 10)
        self.assertEqual(DEFAULT_SHAPE.weight_count, 5178)

    def test_zero_network(self):
        """
        Нулевые веса -> нулевой выход -> середина диапазонов параметров.
        """
        out = policy_forward(np.zeros(5178), self.rng.uniform(size=FEATURE_LENGTH))
        np.testing.assert_array_equal(out, np.zeros(10))
        params = decode_action(out)
        self.assertEqual(params.initial_rank, 5)
        self.assertFalse(params.pmi_enhancement)

    def test_bias_saturation(self):
        w1, b1, w2, b2 = DEFAULT_SHAPE.split(np.zeros(5178))
        weights = DEFAULT_SHAPE.join(w1, b1, w2, np.full(10, 50.0))
        out = policy_forward(weights, np.zeros(FEATURE_LENGTH))
        self.assertTrue(np.all(out > 0.999999))

    def test_matches_loop_oracle(self):
        """
        Совпадение с независимым поэлементным вычислением до 1e-9 относительно.
        """
        shape = PolicyShape(input_dim=7, hidden_dim=4, output_dim=3)
        weights = self.rng.normal(size=shape.weight_count)
        state = self.rng.uniform(size=7)
        offset = 0
        w1 = [[weights[offset + h * 7 + i] for i in range(7)] for h in range(4)]
        offset += 28
        b1 = [weights[offset + h] for h in range(4)]
        offset += 4
        w2 = [[weights[offset + o * 4 + h] for h in range(4)] for o in range(3)]
        offset += 12
        b2 = [weights[offset + o] for o in range(3)]
        hidden = [
            math.tanh(sum(w1[h][i] * state[i] for i in range(7)) + b1[h])
            for h in range(4)
        ]
        expected = [
            math.tanh(sum(w2[o][h] * hidden[h] for h in range(4)) + b2[o])
            for o in range(3)
        ]
        output = policy_forward(weights, state, shape)
        np.testing.assert_allclose(output, expected, rtol=1e-9)

    def test_dimension_mismatch(self):
        with self.assertRaises(ValueError):
            policy_forward(np.zeros(10), np.zeros(FEATURE_LENGTH))
        with self.assertRaises(ValueError):
            policy_forward(np.zeros(5178), np.zeros(5))

    def test_grounded_weights_decode_to_action(self):
        """
        «Заземлённые» веса дают исходное действие при любом состоянии.
        """
        candidates = [SME_BASELINE] + [
            sample_candidate(SamplingMode.UNIFORM_RANDOM, DEFAULT_SPECS, self.rng)
            for _ in range(50)
        ]
        for params in candidates:
            weights = grounded_weights(params)
            state = self.rng.uniform(size=FEATURE_LENGTH)
            self.assertEqual(decode_action(policy_forward(weights, state)), params)


class DistributionTestCase(SimpleTestCase):
    """
    Тесты распределения поиска и выборки популяции.
    """

    def test_init_distribution(self):
        first = init_distribution(seed=3)
        second = init_distribution(seed=3)
        np.testing.assert_array_equal(first.mean, second.mean)
        np.testing.assert_array_equal(first.stddev, np.ones(5178))
        self.assertEqual(first.epoch, 0)
        self.assertAlmostEqual(first.mean.var() / 0.01, 1.0, delta=0.2)

    def test_round_trip(self):
        dist = init_distribution(seed=1)
        restored = SearchDistribution.from_dict(dist.to_dict())
        np.testing.assert_array_equal(restored.mean, dist.mean)
        self.assertEqual(restored.epoch, dist.epoch)

    def test_seeding_split(self):
        """
        n = 50 в эпохе 0: 25 гауссовых, 13 из диапазонов эксперта, 12 случайных.
        """
        dist = init_distribution(seed=0)
        population = sample_population(dist, 50, SeedingMix(), np.random.default_rng(1))
        origins = [candidate.origin for candidate in population]
        self.assertEqual(origins.count(CandidateOrigin.GAUSSIAN), 25)
        self.assertEqual(origins.count(CandidateOrigin.MANUAL), 13)
        self.assertEqual(origins.count(CandidateOrigin.RANDOM), 12)
        self.assertEqual(origins[:25], [CandidateOrigin.GAUSSIAN] * 25)

    def test_later_epochs_are_gaussian(self):
        dist = init_distribution(seed=0)
        dist.epoch = 5
        population = sample_population(dist, 2, SeedingMix(), np.random.default_rng(1))
        self.assertEqual([c.origin for c in population], [CandidateOrigin.GAUSSIAN] * 2)

    def test_manual_candidates_within_ranges(self):
        dist = init_distribution(seed=0)
        population = sample_population(dist, 50, SeedingMix(), np.random.default_rng(2))
        state = np.random.default_rng(3).uniform(size=FEATURE_LENGTH)
        for candidate in population:
            if candidate.origin != CandidateOrigin.MANUAL:
                continue
            values = decode_action(policy_forward(candidate.weights, state)).as_dict()
            for name, value in values.items():
                lo, hi = SPECS_BY_NAME[name].sme_recommended_range
                self.assertTrue(lo - 1e-9 <= value <= hi + 1e-9, name)


class EliteUpdateTestCase(SimpleTestCase):
    """
    Тесты обновления распределения по элите.
    """

    def setUp(self):
        self.rng = np.random.default_rng(11)
        self.dist = SearchDistribution(mean=np.zeros(4), stddev=np.ones(4), epoch=3)

    def test_full_elite(self):
        weights = [self.rng.normal(size=4) for _ in range(6)]
        scored = [(w, float(self.rng.uniform())) for w in weights]
        updated = elite_update(self.dist, scored, elite_frac=1.0)
        np.testing.assert_allclose(updated.mean, np.mean(weights, axis=0))
        self.assertEqual(updated.epoch, 4)

    def test_identical_candidates(self):
        scored = [(np.full(4, 0.3), 0.5) for _ in range(10)]
        updated = elite_update(self.dist, scored, elite_frac=0.2)
        np.testing.assert_allclose(updated.stddev, np.full(4, extra_noise(3)))
        late = SearchDistribution(mean=np.zeros(4), stddev=np.ones(4), epoch=80)
        stddev = elite_update(late, scored, 0.2).stddev
        np.testing.assert_allclose(stddev, np.full(4, 0.01))

    def test_elite_matches_sort_oracle(self):
        """
        n = 50, elite_frac = 0.2 -> ровно 10 элитных, как при сортировке.
        """
        rewards = [float(value) for value in self.rng.integers(0, 20, size=50) / 20]
        elite = select_elite(rewards, 0.2)
        self.assertEqual(len(elite), 10)
        oracle = sorted(range(50), key=lambda index: (-rewards[index], index))[:10]
        self.assertEqual(elite, oracle)

    def test_empty(self):
        with self.assertRaises(ValueError):
            elite_update(self.dist, [], 0.2)

    def test_statistics(self):
        stats = reward_statistics([0.1, 0.2, 0.3, 0.4])
        self.assertAlmostEqual(stats["p25"], 0.175)
        self.assertAlmostEqual(stats["median"], 0.25)
        self.assertAlmostEqual(stats["p75"], 0.325)
        self.assertAlmostEqual(stats["mean"], 0.25)

    def test_statistics_random_lists(self):
        """Квартили совпадают с интерполяцией по отсортированному списку."""

        def quantile(ordered, q):
            rank = (len(ordered) - 1) * q
            low = math.floor(rank)
            high = min(low + 1, len(ordered) - 1)
            return ordered[low] + (rank - low) * (ordered[high] - ordered[low])

        rng = np.random.default_rng(17)
        for _ in range(1000):
            rewards = list(rng.uniform(-1.0, 1.0, size=int(rng.integers(1, 60))))
            ordered = sorted(rewards)
            stats = reward_statistics(rewards)
            self.assertAlmostEqual(stats["p25"], quantile(ordered, 0.25), delta=1e-12)
            self.assertAlmostEqual(stats["median"], quantile(ordered, 0.5), delta=1e-12)
            self.assertAlmostEqual(stats["p75"], quantile(ordered, 0.75), delta=1e-12)
            mean = math.fsum(rewards) / len(rewards)
            self.assertAlmostEqual(stats["mean"], mean, delta=1e-12)

    def test_analytic_objective(self):
        """
        CEM на f(w) = -|w - w*|^2 (10 измерений) приближает w* до 0.01 за 100 итераций.
        """
        for seed in range(10):
            with self.subTest(seed=seed):
                rng = np.random.default_rng(seed)
                target = rng.uniform(-1, 1, size=10)
                dist = SearchDistribution(
                    mean=rng.normal(0, 0.1, 10), stddev=np.ones(10)
                )
                reached = False
                for _ in range(100):
                    population = sample_population(dist, 50, None, rng)
                    scored = [
                        (c.weights, -float(np.sum((c.weights - target) ** 2)))
                        for c in population
                    ]
                    dist = elite_update(dist, scored, 0.2)
                    if np.max(np.abs(dist.mean - target)) < 0.01:
                        reached = True
                        break
                self.assertTrue(reached)


class EnvironmentTestCase(SimpleTestCase):
    """
    Тесты среды: reset, step, ограничения и детерминизм.
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.env = short_env()
        cls.state = cls.env.reset()

    def test_reset_state(self):
        self.assertEqual(len(self.state), 312)
        self.assertTrue(np.all((self.state.values >= 0.0) & (self.state.values <= 1.0)))
        again = short_env().reset()
        np.testing.assert_array_equal(again.values, self.state.values)
        np.testing.assert_array_equal(self.env.shared_state, self.state.values)

    def test_step_contract(self):
        result = self.env.step(SME_BASELINE, seed_offset=7)
        self.assertTrue(result.constraint_ok)
        self.assertTrue(0.0 <= result.reward <= 1.0)
        self.assertTrue(check_constraints(result.bins, 1, 0))
        self.assertEqual(result.session_seed, 5 ^ 7)

    def test_step_determinism(self):
        first = self.env.step(SME_BASELINE, seed_offset=9)
        second = self.env.step(SME_BASELINE, seed_offset=9)
        self.assertEqual(first.reward, second.reward)
        self.assertEqual(first.kpis, second.kpis)
        self.assertEqual(first.session_seed, second.session_seed)
        np.testing.assert_array_equal(first.state.values, second.state.values)

    def test_constraint_failure_scores_zero(self):
        """
        Недостижимые ограничения: reward = 0, constraint_ok = False, повторы исчерпаны.
        """
        env = short_env(x_seconds=5, retries=1)
        result = env.step(SME_BASELINE, seed_offset=1)
        self.assertFalse(result.constraint_ok)
        self.assertEqual(result.reward, 0.0)
        self.assertEqual(result.retries_used, 1)
        self.assertEqual(result.session_seed, session_seed(5, 1, 1))

    def test_idle_scenario_infeasible(self):
        env = short_env(scenario=load_scenario().without_traffic(), retries=0)
        with self.assertRaises(EnvironmentInfeasibleError):
            env.reset()

    def test_higher_ibler_lowers_ack_ratio(self):
        seeds = range(20) if RUN_SLOW_TESTS else range(3)
        ratios = {}
        for target in (0.05, 0.5):
            action = with_params(ibler_target=target)
            ratios[target] = np.mean(
                [
                    self.env.step(action, seed_offset=seed).kpis.dl_ack_ratio
                    for seed in seeds
                ]
            )
        self.assertLess(ratios[0.5], ratios[0.05])


class RunEpochTestCase(SimpleTestCase):
    """
    Тесты одной эпохи CEM поверх среды.
    """

    def test_epoch(self):
        env = short_env(duration_s=1.0)
        env.reset()
        dist = init_distribution(seed=2)
        new_dist, stats = run_epoch(
            env, dist, 4, seed=2, seeding=SeedingMix(), baseline=0.3
        )
        self.assertEqual(new_dist.epoch, 1)
        self.assertEqual(len(stats.rewards), 4)
        self.assertLessEqual(stats.p25, stats.median)
        self.assertLessEqual(stats.median, stats.p75)
        self.assertEqual(stats.best_reward, max(stats.rewards))
        self.assertEqual(stats.baseline, 0.3)
        self.assertEqual(len(stats.steps), 4)
        np.testing.assert_array_equal(
            env.shared_state, stats.steps[stats.best_index].result.state.values
        )

        env_again = short_env(duration_s=1.0)
        env_again.reset()
        _, stats_again = run_epoch(
            env_again,
            init_distribution(seed=2),
            4,
            seed=2,
            seeding=SeedingMix(),
            baseline=0.3,
        )
        self.assertEqual(stats_again.rewards, stats.rewards)
        self.assertEqual(stats_again.best_action, stats.best_action)

    def test_single_candidate(self):
        """
        n = 1, elite_frac = 1: среднее распределения переходит
        в единственного кандидата.
        """
        env = short_env(duration_s=1.0)
        env.reset()
        dist = init_distribution(seed=4)
        new_dist, _ = run_epoch(env, dist, 1, seed=4, elite_frac=1.0)
        (candidate,) = sample_population(dist, 1, None, epoch_rng(4, 0))
        np.testing.assert_array_equal(new_dist.mean, candidate.weights)

    def test_requires_reset(self):
        with self.assertRaises(ValueError):
            run_epoch(short_env(duration_s=1.0), init_distribution(seed=0), 2)

    @skipUnless(RUN_SLOW_TESTS, "долгий тест: RUN_SLOW_TESTS=1")
    def test_parallel_matches_serial(self):
        serial_env = short_env(duration_s=1.0)
        serial_env.reset()
        _, serial = run_epoch(
            serial_env, init_distribution(seed=6), 4, seed=6, seeding=SeedingMix()
        )
        parallel_env = short_env(duration_s=1.0)
        parallel_env.reset()
        _, parallel = run_epoch(
            parallel_env,
            init_distribution(seed=6),
            4,
            seed=6,
            seeding=SeedingMix(),
            workers=2,
        )
        self.assertEqual(serial.rewards, parallel.rewards)
