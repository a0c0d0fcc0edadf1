from dataclasses import dataclass, field
from pathlib import Path

from actions.space import SME_BASELINE
from optimizer.cem import DEFAULT_ELITE_FRAC, DEFAULT_STDDEV_FLOOR, SeedingMix
from optimizer.policy import DEFAULT_SHAPE


@dataclass(frozen=True)
class OptimizerSettings:
    population: int = 50
    elite_frac: float = DEFAULT_ELITE_FRAC
    epochs: int = 150
    stddev_floor: float = DEFAULT_STDDEV_FLOOR
    policy: object = DEFAULT_SHAPE
    seeding: SeedingMix = SeedingMix()


@dataclass(frozen=True)
class BaselineSettings:
    parameters: object = SME_BASELINE
    n_sessions: int = 50


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Проверенная конфигурация эксперимента. document - исходный JSON
    (со встроенным сценарием), по нему прогон восстанавливается из чекпоинта.
    """

    name: str
    seed: int
    output_dir: Path
    env: object
    optimizer: OptimizerSettings = OptimizerSettings()
    baseline: BaselineSettings = BaselineSettings()
    document: dict = field(default_factory=dict, compare=False, repr=False)
