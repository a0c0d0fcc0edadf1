import logging
from dataclasses import dataclass

from scheduler.channel import DEFAULT_SETTINGS

logger = logging.getLogger(__name__)

HIGH_LOAD_FRACTION = 0.8
LOW_LOAD_FRACTION = 0.2


@dataclass(frozen=True)
class LoadCounts:
    """Число секунд сессии по уровням загрузки соты."""

    high: int
    mid: int
    low: int
    idle: int


def load_profile(bins, settings=DEFAULT_SETTINGS):
    """
    Число запланированных DL слотов в каждой секунде сессии.

    Бины группируются по slots_per_second / bin_slots штук; неполная
    последняя секунда не учитывается.
    """
    per_second = max(1, settings.slots_per_second // settings.bin_slots)
    loads = []
    for start in range(0, len(bins) - per_second + 1, per_second):
        window = bins[start : start + per_second]
        loads.append(sum(b["scheduled_dl_ttis"] for b in window))
    return loads


def load_counts(bins, settings=DEFAULT_SETTINGS):
    """
    Высокая загрузка: строго больше 0.8 * DL слотов в секунду.
    Средняя: отрезок [0.2, 0.8] включительно.
    """
    dl_per_second = settings.dl_slots_per_second
    high_threshold = HIGH_LOAD_FRACTION * dl_per_second
    low_threshold = LOW_LOAD_FRACTION * dl_per_second
    high = mid = low = idle = 0
    for load in load_profile(bins, settings):
        if load > high_threshold:
            high += 1
        elif load >= low_threshold:
            mid += 1
        elif load > 0:
            low += 1
        else:
            idle += 1
    return LoadCounts(high=high, mid=mid, low=low, idle=idle)


def check_constraints(bins, x_seconds, y_seconds, settings=DEFAULT_SETTINGS):
    """Сессия валидна, если секунд высокой загрузки >= X и средней >= Y."""
    if x_seconds < 0 or y_seconds < 0:
        raise ValueError("X и Y должны быть неотрицательными")
    counts = load_counts(bins, settings)
    valid = counts.high >= x_seconds and counts.mid >= y_seconds
    if not valid:
        logger.debug(
            "Ограничения не выполнены: высокая %s < %s или средняя %s < %s",
            counts.high,
            x_seconds,
            counts.mid,
            y_seconds,
        )
    return valid
