"""
Целевая функция: нормировка KPI и взвешенная награда r = sum(p_i * k_i).

Веса хранятся в сотых долях (целые), поэтому проверка суммы
и сама свёртка не накапливают ошибку округления.
"""

from dataclasses import dataclass

from django.db import models

from .summary import KPI_NAMES, KpiVector

HUNDREDTHS = 100
THROUGHPUT_CEILING_BPS = 1.2e9
CELL_EDGE_CEILING_BPS = 4e8


class MissingKpiError(KeyError):
    """KPI из конфигурации отсутствует во входном векторе."""


class ObjectiveConfigError(ValueError):
    """Некорректная конфигурация целевой функции."""


class Direction(models.TextChoices):
    MAXIMIZE = "maximize", "Максимизировать"
    MINIMIZE = "minimize", "Минимизировать"


@dataclass(frozen=True)
class ObjectiveEntry:
    kpi_name: str
    weight_hundredths: int
    lo: float
    hi: float
    direction: str = Direction.MAXIMIZE

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ObjectiveConfigError(f"{self.kpi_name}: нужно lo < hi")
        if not 0 <= self.weight_hundredths <= HUNDREDTHS:
            raise ObjectiveConfigError(f"{self.kpi_name}: вес вне [0, 1]")

    @property
    def weight(self):
        return self.weight_hundredths / HUNDREDTHS

    def as_dict(self):
        return {
            "kpi_name": self.kpi_name,
            "weight": self.weight,
            "normalization": {
                "lo": self.lo,
                "hi": self.hi,
                "direction": str(self.direction),
            },
        }


@dataclass(frozen=True)
class ObjectiveConfig:
    entries: tuple

    def __post_init__(self):
        names = [entry.kpi_name for entry in self.entries]
        if len(set(names)) != len(names):
            raise ObjectiveConfigError("KPI в целевой функции повторяются")
        total = sum(entry.weight_hundredths for entry in self.entries)
        if total != HUNDREDTHS:
            raise ObjectiveConfigError(
                f"Сумма весов должна быть 1.00, получено {total / 100:.2f}"
            )

    @property
    def kpi_names(self):
        return tuple(entry.kpi_name for entry in self.entries)

    def as_dict(self):
        return {"entries": [entry.as_dict() for entry in self.entries]}


def normalize_kpi(value, entry):
    k = (value - entry.lo) / (entry.hi - entry.lo)
    k = min(1.0, max(0.0, k))
    if entry.direction == Direction.MINIMIZE:
        k = 1.0 - k
    return k


def normalized_kpis(kpis, cfg):
    """Нормированные k_i в порядке записей конфигурации."""
    values = kpis.as_dict() if isinstance(kpis, KpiVector) else kpis
    result = []
    for entry in cfg.entries:
        if entry.kpi_name not in values:
            raise MissingKpiError(entry.kpi_name)
        result.append(normalize_kpi(values[entry.kpi_name], entry))
    return result


def reward(kpis, cfg):
    normalized = normalized_kpis(kpis, cfg)
    total = sum(
        entry.weight_hundredths * k for entry, k in zip(cfg.entries, normalized)
    )
    return min(1.0, max(0.0, total / HUNDREDTHS))


def _entry(name, weight_hundredths):
    if name.endswith("_throughput_bps"):
        hi = THROUGHPUT_CEILING_BPS
        if name == "cell_edge_throughput_bps":
            hi = CELL_EDGE_CEILING_BPS
        return ObjectiveEntry(name, weight_hundredths, 0.0, hi)
    if name == "dl_mean_mcs":
        return ObjectiveEntry(name, weight_hundredths, 0.0, 27.0)
    if name in ("dl_nack_ratio", "dl_dtx_ratio"):
        return ObjectiveEntry(name, weight_hundredths, 0.0, 1.0, Direction.MINIMIZE)
    return ObjectiveEntry(name, weight_hundredths, 0.0, 1.0)


def default_entry(name, weight_hundredths=0):
    """Запись с границами нормировки по умолчанию для KPI name."""
    if name not in KPI_NAMES:
        raise ObjectiveConfigError(f"Неизвестный KPI: {name}")
    return _entry(name, weight_hundredths)


DEFAULT_OBJECTIVE = ObjectiveConfig(
    entries=(
        default_entry("dl_mac_throughput_bps", 22),
        default_entry("dl_rlc_throughput_bps", 29),
        default_entry("dl_ack_ratio", 28),
        default_entry("ul_ack_ratio", 15),
        default_entry("dl_mean_mcs", 6),
        default_entry("cce2_utilization", 0),
    )
)


def _split(total, proportions):
    """Делит целое total по пропорциям; остаток уходит последней части."""
    whole = sum(proportions)
    parts = [round(total * share / whole) for share in proportions[:-1]]
    parts.append(total - sum(parts))
    if parts[-1] < 0:
        raise ObjectiveConfigError("Некорректное разбиение весов")
    return parts


def objective_from_preset(capacity, coverage, quality):
    """
    Цель оператора в терминах ёмкость / покрытие / качество (в сотых, сумма 100).

    Ёмкость делится между MAC и RLC как 22:29, качество между DL ACK,
    UL ACK и средним MCS как 28:15:6, покрытие - пропускная способность
    UE на краю соты. При (51, 0, 49) веса совпадают с целью по умолчанию.
    """
    weights = (capacity, coverage, quality)
    if min(weights) < 0 or sum(weights) != HUNDREDTHS:
        raise ObjectiveConfigError(
            "Веса пресета должны быть неотрицательны и давать в сумме 100"
        )
    mac, rlc = _split(capacity, (22, 29))
    dl_ack, ul_ack, mcs = _split(quality, (28, 15, 6))
    return ObjectiveConfig(
        entries=(
            default_entry("dl_mac_throughput_bps", mac),
            default_entry("dl_rlc_throughput_bps", rlc),
            default_entry("dl_ack_ratio", dl_ack),
            default_entry("ul_ack_ratio", ul_ack),
            default_entry("dl_mean_mcs", mcs),
            default_entry("cell_edge_throughput_bps", coverage),
            default_entry("cce2_utilization", 0),
        )
    )
