"""
Среда в стиле gym: действие - набор параметров планировщика,
шаг - одна симулированная сессия, награда - взвешенная сумма KPI.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from actions.space import DEFAULT_SPECS, SME_BASELINE
from kpi.aggregation import aggregate
from kpi.constraints import check_constraints
from kpi.features import features
from kpi.objective import DEFAULT_OBJECTIVE, reward
from kpi.summary import summarize
from scheduler.scenario import ScenarioError
from scheduler.session import run_session

logger = logging.getLogger(__name__)

RESET_SEED_OFFSET = 0


class EnvironmentInfeasibleError(ValueError):
    """Сессия базовой конфигурации не проходит ограничения даже после повторов."""


@dataclass(frozen=True)
class EnvConfig:
    scenario: object
    session_duration_s: float = 30.0
    x_seconds: int = 5
    y_seconds: int = 5
    max_constraint_retries: int = 3
    objective: object = DEFAULT_OBJECTIVE
    base_seed: int = 0
    specs: tuple = DEFAULT_SPECS
    baseline_action: object = SME_BASELINE

    def __post_init__(self):
        settings = self.scenario.settings
        if self.session_duration_s * settings.slots_per_second < settings.bin_slots:
            raise ScenarioError("Сессия короче одного бина")
        if self.max_constraint_retries < 0:
            raise ScenarioError("max_constraint_retries должен быть >= 0")
        if self.x_seconds < 0 or self.y_seconds < 0:
            raise ScenarioError("X и Y должны быть неотрицательными")
        if self.base_seed < 0:
            raise ScenarioError("base_seed должен быть неотрицательным")


@dataclass(frozen=True)
class StepResult:
    state: object
    reward: float
    kpis: object
    constraint_ok: bool
    retries_used: int
    session_seed: int
    bins: list = field(default_factory=list, compare=False, repr=False)


def session_seed(base_seed, seed_offset, attempt=0):
    """
    Seed сессии: base_seed XOR seed_offset, для повторов - новый seed,
    выведенный из (base_seed, seed_offset, attempt).
    """
    if attempt == 0:
        return base_seed ^ seed_offset
    sequence = np.random.SeedSequence([base_seed, seed_offset, attempt])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


class SchedulerEnv:
    """
    Одношаговая среда. Общее состояние эпохи (вектор признаков) хранится
    в shared_state и обновляется только между эпохами.
    """

    def __init__(self, config):
        self.config = config
        self.shared_state = None

    def simulate(self, action, seed):
        """Одна сессия: признаки, KPI, бины и флаг ограничений."""
        config = self.config
        scenario = config.scenario
        traces = run_session(scenario, action, seed, config.session_duration_s)
        bins = aggregate(traces, scenario.settings)
        meta = scenario.describe(config.session_duration_s)
        state = features(bins, meta, scenario.settings)
        kpis = summarize(bins, scenario.settings, meta.coverage_classes)
        ok = check_constraints(
            bins, config.x_seconds, config.y_seconds, scenario.settings
        )
        return state, kpis, bins, ok

    def step(self, action, seed_offset=0):
        config = self.config
        for attempt in range(config.max_constraint_retries + 1):
            seed = session_seed(config.base_seed, seed_offset, attempt)
            state, kpis, bins, ok = self.simulate(action, seed)
            if ok:
                break
            logger.warning(
                "Сессия seed=%s не прошла ограничения (попытка %s из %s)",
                seed,
                attempt + 1,
                config.max_constraint_retries + 1,
            )
        value = reward(kpis, config.objective) if ok else 0.0
        return StepResult(
            state=state,
            reward=value,
            kpis=kpis,
            constraint_ok=ok,
            retries_used=attempt,
            session_seed=seed,
            bins=bins,
        )

    def reset(self):
        """Сессия с базовыми параметрами эксперта; её признаки - начальное состояние."""
        result = self.step(self.config.baseline_action, RESET_SEED_OFFSET)
        if not result.constraint_ok:
            raise EnvironmentInfeasibleError(
                f"Базовая сессия не прошла ограничения X={self.config.x_seconds}, "
                f"Y={self.config.y_seconds} за {result.retries_used + 1} попыток"
            )
        self.publish_state(result.state)
        return result.state

    def publish_state(self, state):
        self.shared_state = np.array(getattr(state, "values", state), dtype=float)


def evaluate_candidate(env, action, seed_offset):
    """Точка входа для пула процессов."""
    return env.step(action, seed_offset)
