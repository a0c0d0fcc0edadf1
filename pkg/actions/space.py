import json
import math
from dataclasses import dataclass, replace
from decimal import Decimal

import numpy as np
from django.db import models

GRID_TOLERANCE = 1e-6


class ParameterError(ValueError):
    """Базовая ошибка набора параметров. Хранит имя поля, вызвавшего ошибку."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class OffGridError(ParameterError):
    pass


class OutOfRangeError(ParameterError):
    pass


class DegenerateIblerError(ParameterError):
    pass


class ParameterKind(models.TextChoices):
    QUANTIZED_REAL = "quantized_real", "Вещественный с шагом"
    BOOLEAN = "boolean", "Флаг"
    INTEGER_RANGE = "integer_range", "Целый диапазон"


class SamplingMode(models.TextChoices):
    MANUAL_RANGE = "manual_range", "Диапазон эксперта"
    UNIFORM_RANDOM = "uniform_random", "Равномерно по сетке"


@dataclass(frozen=True)
class ParameterSpec:
    """
    Описание одного настраиваемого параметра планировщика.

    attr - имя поля ParameterSet, где хранится индекс сетки.
    guarded_max - максимум представим, но запрещён при валидации
    (IBLER = 100% делает шаг OLLA бесконечным).
    """

    name: str
    attr: str
    kind: str
    min: float
    max: float
    step: float = 1.0
    sme_recommended_range: tuple | None = None
    guarded_max: bool = False

    def __post_init__(self):
        if self.min > self.max:
            raise ValueError(f"{self.name}: min больше max")
        if self.step <= 0:
            raise ValueError(f"{self.name}: шаг должен быть положительным")
        if self.kind == ParameterKind.QUANTIZED_REAL:
            span = (Decimal(str(self.max)) - Decimal(str(self.min))) / Decimal(
                str(self.step)
            )
            if span != span.to_integral_value():
                raise ValueError(f"{self.name}: диапазон не кратен шагу")

    @property
    def count(self):
        if self.kind == ParameterKind.BOOLEAN:
            return 2
        if self.kind == ParameterKind.INTEGER_RANGE:
            return int(self.max) - int(self.min) + 1
        return int(round((self.max - self.min) / self.step)) + 1

    @property
    def max_valid_index(self):
        return self.count - 2 if self.guarded_max else self.count - 1

    def value_of(self, index):
        """Значение параметра по индексу сетки (без накопления ошибки шага)."""
        if self.kind == ParameterKind.BOOLEAN:
            return bool(index)
        if self.kind == ParameterKind.INTEGER_RANGE:
            return int(self.min) + index
        return float(Decimal(str(self.min)) + index * Decimal(str(self.step)))

    def index_of(self, value):
        """Индекс сетки для значения; OutOfRange/OffGrid при нарушении."""
        if self.kind == ParameterKind.BOOLEAN:
            if value in (True, False, 0, 1):
                return int(bool(value))
            raise OffGridError(self.name, f"ожидается 0 или 1, получено {value!r}")
        if value < self.min or value > self.max:
            raise OutOfRangeError(
                self.name, f"{value} вне диапазона [{self.min}, {self.max}]"
            )
        position = (value - self.min) / self.step
        index = round(position)
        if abs(position - index) > GRID_TOLERANCE:
            raise OffGridError(
                self.name, f"{value} не лежит на сетке с шагом {self.step}"
            )
        return int(index)

    def range_indices(self, lo, hi):
        first, last = self.index_of(lo), self.index_of(hi)
        if first > last:
            raise ValueError(f"{self.name}: пустой рекомендованный диапазон")
        return first, min(last, self.max_valid_index)


@dataclass(frozen=True)
class ParameterSet:
    """
    Действие агента: десять параметров планировщика.

    Вещественные параметры хранятся индексами сетки, значения доступны
    через одноимённые свойства (ibler_target, mcs_filter, ...).
    """

    ibler_target_index: int
    adaptive_mcs_selection: bool
    pmi_enhancement: bool
    mcs_filter_index: int
    initial_rank: int
    harq_enhancement: bool
    cqi_filter_coeff_index: int
    pdcch_adaptive: bool
    fairness_exponent_index: int
    max_mcs_cap: int

    @property
    def ibler_target(self):
        return SPECS_BY_NAME["ibler_target"].value_of(self.ibler_target_index)

    @property
    def mcs_filter(self):
        return SPECS_BY_NAME["mcs_filter"].value_of(self.mcs_filter_index)

    @property
    def cqi_filter_coeff(self):
        return SPECS_BY_NAME["cqi_filter_coeff"].value_of(self.cqi_filter_coeff_index)

    @property
    def fairness_exponent(self):
        return SPECS_BY_NAME["fairness_exponent"].value_of(self.fairness_exponent_index)

    def as_dict(self, specs=None):
        """Значения параметров в каноническом порядке."""
        specs = specs or DEFAULT_SPECS
        return {spec.name: spec.value_of(self.index(spec)) for spec in specs}

    def index(self, spec):
        value = getattr(self, spec.attr)
        if spec.kind == ParameterKind.INTEGER_RANGE:
            return value - int(spec.min)
        return int(value)

    def to_json(self):
        """Однострочный JSON с фиксированным порядком ключей (для логов и CSV)."""
        return json.dumps(self.as_dict(), separators=(",", ":"))

    @classmethod
    def from_indices(cls, indices, specs=None):
        specs = specs or DEFAULT_SPECS
        kwargs = {}
        for spec, index in zip(specs, indices):
            if spec.kind == ParameterKind.BOOLEAN:
                kwargs[spec.attr] = bool(index)
            elif spec.kind == ParameterKind.INTEGER_RANGE:
                kwargs[spec.attr] = int(spec.min) + int(index)
            else:
                kwargs[spec.attr] = int(index)
        return cls(**kwargs)


CORE_SPECS = (
    ParameterSpec(
        "ibler_target",
        "ibler_target_index",
        ParameterKind.QUANTIZED_REAL,
        0.0,
        1.0,
        0.01,
        (0.05, 0.15),
        guarded_max=True,
    ),
    ParameterSpec(
        "adaptive_mcs_selection",
        "adaptive_mcs_selection",
        ParameterKind.BOOLEAN,
        0,
        1,
        sme_recommended_range=(0, 1),
    ),
    ParameterSpec(
        "pmi_enhancement",
        "pmi_enhancement",
        ParameterKind.BOOLEAN,
        0,
        1,
        sme_recommended_range=(0, 1),
    ),
    ParameterSpec(
        "mcs_filter",
        "mcs_filter_index",
        ParameterKind.QUANTIZED_REAL,
        0.0,
        2.0,
        0.01,
        (0.0, 1.0),
    ),
    ParameterSpec(
        "initial_rank",
        "initial_rank",
        ParameterKind.INTEGER_RANGE,
        1,
        8,
        sme_recommended_range=(2, 4),
    ),
    ParameterSpec(
        "harq_enhancement",
        "harq_enhancement",
        ParameterKind.BOOLEAN,
        0,
        1,
        sme_recommended_range=(0, 1),
    ),
)

# Дополнительные параметры: фильтр CQI, адаптация PDCCH,
# показатель PF-справедливости, потолок MCS.
EXTENDED_SPECS = (
    ParameterSpec(
        "cqi_filter_coeff",
        "cqi_filter_coeff_index",
        ParameterKind.QUANTIZED_REAL,
        0.0,
        1.0,
        0.05,
        (0.2, 0.6),
    ),
    ParameterSpec(
        "pdcch_adaptive",
        "pdcch_adaptive",
        ParameterKind.BOOLEAN,
        0,
        1,
        sme_recommended_range=(1, 1),
    ),
    ParameterSpec(
        "fairness_exponent",
        "fairness_exponent_index",
        ParameterKind.QUANTIZED_REAL,
        0.0,
        2.0,
        0.1,
        (0.8, 1.2),
    ),
    ParameterSpec(
        "max_mcs_cap",
        "max_mcs_cap",
        ParameterKind.INTEGER_RANGE,
        0,
        27,
        sme_recommended_range=(24, 27),
    ),
)

DEFAULT_SPECS = CORE_SPECS + EXTENDED_SPECS
SPECS_BY_NAME = {spec.name: spec for spec in DEFAULT_SPECS}
PARAMETER_NAMES = tuple(spec.name for spec in DEFAULT_SPECS)


def validate(ps, specs=None):
    """
    Проверяет набор параметров.

    Принимает ParameterSet или словарь значений (например, из JSON конфига).
    Возвращает ParameterSet; при нарушении бросает OffGridError,
    OutOfRangeError или DegenerateIblerError с именем поля.
    """
    specs = specs or DEFAULT_SPECS
    indices = []
    for spec in specs:
        if isinstance(ps, ParameterSet):
            index = ps.index(spec)
            if not 0 <= index < spec.count:
                raise OutOfRangeError(spec.name, f"индекс {index} вне сетки")
        else:
            if spec.name not in ps:
                raise OutOfRangeError(spec.name, "значение не задано")
            index = spec.index_of(ps[spec.name])
        if spec.guarded_max and index == spec.count - 1:
            raise DegenerateIblerError(
                spec.name, "значение 100% недопустимо (деление на ноль в OLLA)"
            )
        indices.append(index)
    if isinstance(ps, ParameterSet):
        return ps
    return ParameterSet.from_indices(indices, specs)


def cardinality(specs):
    """Число всех комбинаций значений (произведение размеров сеток)."""
    return math.prod(spec.count for spec in specs)


def decode_action(raw, specs=None):
    """
    Переводит выход MLP (10 чисел в [-1, 1]) в набор параметров.

    Аффинное отображение на диапазон и привязка к ближайшему узлу сетки
    (половина округляется вверх); флаг включён только при значении > 0.
    """
    specs = specs or DEFAULT_SPECS
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (len(specs),):
        raise ValueError(f"ожидается вектор длины {len(specs)}, получено {raw.shape}")
    if np.any(np.abs(raw) > 1.0) or not np.all(np.isfinite(raw)):
        raise ValueError("выход политики вне [-1, 1]")
    indices = []
    for spec, component in zip(specs, raw):
        if spec.kind == ParameterKind.BOOLEAN:
            indices.append(int(component > 0.0))
            continue
        position = (component + 1.0) / 2.0 * (spec.count - 1)
        indices.append(min(math.floor(position + 0.5), spec.max_valid_index))
    return ParameterSet.from_indices(indices, specs)


def encode_action(ps, specs=None):
    """Обратное к decode_action: узел сетки -> точка в [-1, 1]."""
    specs = specs or DEFAULT_SPECS
    raw = []
    for spec in specs:
        index = ps.index(spec)
        if spec.kind == ParameterKind.BOOLEAN:
            raw.append(0.5 if index else -0.5)
        elif spec.count == 1:
            raw.append(0.0)
        else:
            raw.append(2.0 * index / (spec.count - 1) - 1.0)
    return np.array(raw)


def sample_candidate(mode, specs, rng):
    """
    Случайный набор параметров.

    UNIFORM_RANDOM - равномерно по всей сетке каждого параметра,
    MANUAL_RANGE - равномерно по рекомендованному экспертом поддиапазону.
    """
    indices = []
    for spec in specs:
        if mode == SamplingMode.MANUAL_RANGE:
            if spec.sme_recommended_range is None:
                raise ValueError(f"{spec.name}: не задан рекомендованный диапазон")
            first, last = spec.range_indices(*spec.sme_recommended_range)
        else:
            first, last = 0, spec.max_valid_index
        indices.append(int(rng.integers(first, last + 1)))
    return ParameterSet.from_indices(indices, specs)


def with_recommended_ranges(specs, ranges):
    """Копия спецификаций с переопределёнными диапазонами эксперта."""
    result = []
    for spec in specs:
        if spec.name in ranges:
            lo, hi = ranges[spec.name]
            spec = replace(spec, sme_recommended_range=(lo, hi))
            spec.range_indices(lo, hi)
        result.append(spec)
    return tuple(result)


SME_BASELINE = validate(
    {
        "ibler_target": 0.10,
        "adaptive_mcs_selection": True,
        "pmi_enhancement": False,
        "mcs_filter": 0.5,
        "initial_rank": 2,
        "harq_enhancement": False,
        "cqi_filter_coeff": 0.3,
        "pdcch_adaptive": True,
        "fairness_exponent": 1.0,
        "max_mcs_cap": 27,
    }
)

