"""
Метод кросс-энтропии по весам MLP политики (диагональная гауссиана).
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat

import numpy as np
from django.db import models

from actions.space import DEFAULT_SPECS, SamplingMode, decode_action, sample_candidate

from .environment import evaluate_candidate
from .policy import DEFAULT_SHAPE, grounded_weights, policy_forward

logger = logging.getLogger(__name__)

INITIAL_MEAN_STD = 0.1
INITIAL_STDDEV = 1.0
DEFAULT_STDDEV_FLOOR = 0.01
DEFAULT_ELITE_FRAC = 0.2
CANDIDATE_OFFSET_STRIDE = 100_000
PERCENTILE_METHOD = "linear"


class CandidateOrigin(models.TextChoices):
    GAUSSIAN = "gaussian", "Гауссов"
    MANUAL = "manual", "Диапазон эксперта"
    RANDOM = "random", "Случайный"


@dataclass
class SearchDistribution:
    mean: np.ndarray
    stddev: np.ndarray
    epoch: int = 0

    def to_dict(self):
        return {
            "epoch": self.epoch,
            "mean": [float(value) for value in self.mean],
            "stddev": [float(value) for value in self.stddev],
        }

    @classmethod
    def from_dict(cls, data):
        mean = np.array(data["mean"], dtype=float)
        stddev = np.array(data["stddev"], dtype=float)
        if mean.shape != stddev.shape:
            raise ValueError("Размеры mean и stddev не совпадают")
        return cls(mean=mean, stddev=stddev, epoch=int(data["epoch"]))


@dataclass(frozen=True)
class SeedingMix:
    """
    Доля «заземлённых» кандидатов в эпохе 0 и доля среди них
    кандидатов из диапазонов эксперта (остальные - случайные по сетке).
    """

    grounded_fraction: float = 0.5
    manual_fraction: float = 0.5
    specs: tuple = DEFAULT_SPECS

    def split(self, n):
        """(gaussian, manual, random) для популяции n; manual округляется вверх."""
        grounded = math.floor(n * self.grounded_fraction)
        manual = math.ceil(grounded * self.manual_fraction)
        return n - grounded, manual, grounded - manual


@dataclass(frozen=True)
class Candidate:
    weights: np.ndarray
    origin: str


@dataclass(frozen=True)
class StepRecord:
    index: int
    origin: str
    action: object
    result: object


@dataclass
class EpochStats:
    epoch: int
    rewards: list
    p25: float
    median: float
    mean: float
    p75: float
    best_index: int
    best_reward: float
    best_action: object
    baseline: float = 0.0
    constraint_failures: int = 0
    elite_indices: list = field(default_factory=list)
    steps: list = field(default_factory=list, repr=False)


def init_distribution(shape=DEFAULT_SHAPE, seed=0):
    rng = np.random.default_rng(seed)
    return SearchDistribution(
        mean=rng.normal(0.0, INITIAL_MEAN_STD, shape.weight_count),
        stddev=np.full(shape.weight_count, INITIAL_STDDEV),
        epoch=0,
    )


def epoch_rng(seed, epoch):
    """Генератор эпохи зависит только от (seed, epoch)."""
    return np.random.default_rng([seed, epoch])


def sample_population(dist, n, seeding, rng, shape=DEFAULT_SHAPE):
    """
    n кандидатов: в эпохе 0 часть из них «заземлена» на действия эксперта
    и случайные действия, дальше - только выборка из гауссианы.
    Порядок: gaussian, manual, random.
    """
    if n < 1:
        raise ValueError("Размер популяции должен быть положительным")
    gaussian, manual, uniform = n, 0, 0
    if dist.epoch == 0 and seeding is not None:
        gaussian, manual, uniform = seeding.split(n)

    population = [
        Candidate(
            dist.mean + dist.stddev * rng.standard_normal(dist.mean.size),
            CandidateOrigin.GAUSSIAN,
        )
        for _ in range(gaussian)
    ]
    for count, mode, origin in (
        (manual, SamplingMode.MANUAL_RANGE, CandidateOrigin.MANUAL),
        (uniform, SamplingMode.UNIFORM_RANDOM, CandidateOrigin.RANDOM),
    ):
        for _ in range(count):
            params = sample_candidate(mode, seeding.specs, rng)
            weights = grounded_weights(params, shape, seeding.specs)
            population.append(Candidate(weights, origin))
    return population


def elite_count(n, elite_frac):
    if not 0.0 < elite_frac <= 1.0:
        raise ValueError(f"elite_frac должен лежать в (0, 1]: {elite_frac}")
    return max(1, math.ceil(elite_frac * n - 1e-9))


def select_elite(rewards, elite_frac):
    """Индексы элиты: по убыванию награды, при равенстве - меньший индекс."""
    order = sorted(range(len(rewards)), key=lambda index: (-rewards[index], index))
    return order[: elite_count(len(rewards), elite_frac)]


def extra_noise(epoch):
    return max(0.0, 0.05 - 0.001 * epoch)


def elite_update(
    dist, scored, elite_frac=DEFAULT_ELITE_FRAC, stddev_floor=DEFAULT_STDDEV_FLOOR
):
    """
    Новое распределение по элите: среднее и СКО (ddof=0) элитных весов
    плюс затухающий шум, не ниже stddev_floor.
    """
    if not scored:
        raise ValueError("Нет оценённых кандидатов")
    rewards = [score for _, score in scored]
    elite = np.array([scored[index][0] for index in select_elite(rewards, elite_frac)])
    stddev = np.maximum(elite.std(axis=0) + extra_noise(dist.epoch), stddev_floor)
    return SearchDistribution(
        mean=elite.mean(axis=0), stddev=stddev, epoch=dist.epoch + 1
    )


def reward_statistics(rewards):
    """Квартили (линейная интерполяция между порядковыми статистиками) и среднее."""
    values = np.asarray(rewards, dtype=float)
    p25, median, p75 = np.percentile(values, [25, 50, 75], method=PERCENTILE_METHOD)
    return {
        "p25": float(p25),
        "median": float(median),
        "mean": float(values.mean()),
        "p75": float(p75),
    }


def candidate_seed_offset(epoch, index):
    return (epoch + 1) * CANDIDATE_OFFSET_STRIDE + index


def evaluate_population(env, actions, offsets, workers=1):
    """Кандидаты независимы; при workers > 1 оцениваются в пуле процессов."""
    if workers <= 1 or len(actions) <= 1:
        return [
            evaluate_candidate(env, action, offset)
            for action, offset in zip(actions, offsets)
        ]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(evaluate_candidate, repeat(env), actions, offsets))


def run_epoch(
    env,
    dist,
    n,
    *,
    seed=0,
    elite_frac=DEFAULT_ELITE_FRAC,
    stddev_floor=DEFAULT_STDDEV_FLOOR,
    seeding=None,
    shape=DEFAULT_SHAPE,
    baseline=0.0,
    workers=1,
):
    """
    Одна эпоха: выборка, декодирование по общему состоянию, оценка,
    статистика и обновление распределения. Признаки лучшей сессии
    становятся общим состоянием следующей эпохи.
    """
    if env.shared_state is None:
        raise ValueError("Среда не инициализирована: вызовите reset()")
    specs = env.config.specs
    rng = epoch_rng(seed, dist.epoch)
    population = sample_population(dist, n, seeding, rng, shape)
    actions = [
        decode_action(policy_forward(candidate.weights, env.shared_state, shape), specs)
        for candidate in population
    ]
    offsets = [candidate_seed_offset(dist.epoch, index) for index in range(n)]
    results = evaluate_population(env, actions, offsets, workers)

    rewards = [result.reward for result in results]
    elite = select_elite(rewards, elite_frac)
    best = elite[0]
    stats = EpochStats(
        epoch=dist.epoch,
        rewards=rewards,
        best_index=best,
        best_reward=rewards[best],
        best_action=actions[best],
        baseline=baseline,
        constraint_failures=sum(1 for result in results if not result.constraint_ok),
        elite_indices=elite,
        steps=[
            StepRecord(index, candidate.origin, action, result)
            for index, (candidate, action, result) in enumerate(
                zip(population, actions, results)
            )
        ],
        **reward_statistics(rewards),
    )
    new_dist = elite_update(
        dist,
        [(candidate.weights, value) for candidate, value in zip(population, rewards)],
        elite_frac,
        stddev_floor,
    )
    env.publish_state(results[best].state)
    logger.info(
        "Эпоха %s: медиана %.4f, среднее %.4f, лучшая %.4f, база %.4f",
        stats.epoch,
        stats.median,
        stats.mean,
        stats.best_reward,
        baseline,
    )
    return new_dist, stats
