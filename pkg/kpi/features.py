"""
Вектор признаков сессии (состояние политики).

Схема фиксирована: 36 рядов соты x 5 статистик, 3 UE x 8 рядов x 5 статистик
и 12 дескрипторов сессии, всего 312 значений. Каждое значение нормируется
в [0, 1] по границам из схемы, а не по данным.
"""

import json
from dataclasses import dataclass

import numpy as np

from scheduler.channel import DEFAULT_SETTINGS
from scheduler.scenario import CoverageClass

from .aggregation import CELL_SERIES, UE_SERIES
from .constraints import load_counts, load_profile
from .summary import SessionTooShortError

SCHEMA_VERSION = 1
DEFAULT_UE_COUNT = 3
STATISTICS = ("mean", "stddev", "min", "max", "p90")

# Бин - 1 с при 1600 DL слотах; значения выше границ обрезаются.
BITS_PER_BIN = 1.2e9
TB_PER_BIN = 4800.0
DL_SLOTS_PER_BIN = 1600.0
UL_SLOTS_PER_BIN = 400.0
BUFFER_BITS = 1e8
MAX_SESSION_S = 600.0

CELL_BOUNDS = {
    "dl_mac_bits": (0.0, BITS_PER_BIN),
    "dl_rlc_bits": (0.0, BITS_PER_BIN),
    "dl_pdcp_bits": (0.0, BITS_PER_BIN),
    "ul_ack_count": (0.0, UL_SLOTS_PER_BIN),
    "ul_nack_count": (0.0, UL_SLOTS_PER_BIN),
    "dl_ack_count": (0.0, TB_PER_BIN),
    "dl_nack_count": (0.0, TB_PER_BIN),
    "dl_dtx_count": (0.0, TB_PER_BIN),
    "scheduled_dl_ttis": (0.0, DL_SLOTS_PER_BIN),
    "rb_used": (0.0, DL_SLOTS_PER_BIN * 273),
    "cce_2": (0.0, TB_PER_BIN),
    "cce_4": (0.0, TB_PER_BIN),
    "cce_8": (0.0, TB_PER_BIN),
    "cce_16": (0.0, TB_PER_BIN),
    "mean_mcs": (0.0, 27.0),
    "mean_cqi": (0.0, 15.0),
    "mean_rank": (0.0, 8.0),
    "buffer_bits_end": (0.0, BUFFER_BITS),
    "retx_count": (0.0, TB_PER_BIN),
    "dl_slots": (0.0, DL_SLOTS_PER_BIN),
    "ul_slots": (0.0, UL_SLOTS_PER_BIN),
    "dl_tb_count": (0.0, TB_PER_BIN),
    "initial_tx_count": (0.0, TB_PER_BIN),
    "initial_error_count": (0.0, TB_PER_BIN),
    "retx_bits": (0.0, BITS_PER_BIN),
    "dl_ack_bits": (0.0, BITS_PER_BIN),
    "max_scheduled_ues": (0.0, 8.0),
    "mean_scheduled_ues": (0.0, 8.0),
    "rb_utilization": (0.0, 1.0),
    "cce_used": (0.0, DL_SLOTS_PER_BIN * 48),
    "cce_utilization": (0.0, 1.0),
    "std_mcs": (0.0, 13.5),
    "std_cqi": (0.0, 7.5),
    "min_cqi": (0.0, 15.0),
    "max_cqi": (0.0, 15.0),
    "mean_buffer_bits": (0.0, BUFFER_BITS),
}

UE_BOUNDS = {
    "mac_bits": (0.0, BITS_PER_BIN),
    "ack_ratio": (0.0, 1.0),
    "dtx_ratio": (0.0, 1.0),
    "mean_cqi": (0.0, 15.0),
    "mean_mcs": (0.0, 27.0),
    "rb_share": (0.0, 1.0),
    "buffer_bits": (0.0, BUFFER_BITS),
    "scheduled_ttis": (0.0, DL_SLOTS_PER_BIN),
}

DESCRIPTOR_BOUNDS = {
    "duration_s": (0.0, MAX_SESSION_S),
    "bin_count": (0.0, MAX_SESSION_S),
    "ue_count": (0.0, 16.0),
    "full_buffer_fraction": (0.0, 1.0),
    "offered_load_excellent_bps": (0.0, BITS_PER_BIN),
    "offered_load_medium_bps": (0.0, BITS_PER_BIN),
    "offered_load_poor_bps": (0.0, BITS_PER_BIN),
    "high_load_share": (0.0, 1.0),
    "mid_load_share": (0.0, 1.0),
    "low_load_share": (0.0, 1.0),
    "idle_share": (0.0, 1.0),
    "mean_scheduled_dl_ttis": (0.0, DL_SLOTS_PER_BIN),
}


def _statistic_bounds(statistic, lo, hi):
    # СКО значений из [lo, hi] не превосходит (hi - lo) / 2.
    if statistic == "stddev":
        return 0.0, (hi - lo) / 2.0
    return lo, hi


@dataclass(frozen=True)
class FeatureSchema:
    """Имена и границы нормировки признаков в порядке вектора."""

    names: tuple
    lower: np.ndarray
    upper: np.ndarray
    ue_count: int
    version: int = SCHEMA_VERSION

    def __len__(self):
        return len(self.names)

    def to_document(self):
        return {
            "schema_version": self.version,
            "ue_count": self.ue_count,
            "length": len(self.names),
            "statistics": list(STATISTICS),
            "features": [
                {"name": name, "lo": float(lo), "hi": float(hi)}
                for name, lo, hi in zip(self.names, self.lower, self.upper)
            ],
        }

    def export(self, path):
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_document(), handle, ensure_ascii=False, indent=2)


def build_schema(ue_count=DEFAULT_UE_COUNT):
    names, lower, upper = [], [], []

    def add(name, bounds):
        names.append(name)
        lower.append(bounds[0])
        upper.append(bounds[1])

    for series in CELL_SERIES:
        for statistic in STATISTICS:
            bounds = _statistic_bounds(statistic, *CELL_BOUNDS[series])
            add(f"cell.{series}.{statistic}", bounds)
    for ue in range(ue_count):
        for series in UE_SERIES:
            for statistic in STATISTICS:
                bounds = _statistic_bounds(statistic, *UE_BOUNDS[series])
                add(f"ue{ue}.{series}.{statistic}", bounds)
    for name, bounds in DESCRIPTOR_BOUNDS.items():
        add(f"session.{name}", bounds)
    return FeatureSchema(
        names=tuple(names),
        lower=np.array(lower),
        upper=np.array(upper),
        ue_count=ue_count,
    )


FEATURE_SCHEMA = build_schema()
FEATURE_LENGTH = len(FEATURE_SCHEMA)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    raw: np.ndarray
    schema_version: int = SCHEMA_VERSION

    def __len__(self):
        return len(self.values)


def series_statistics(matrix):
    """
    Статистики по оси бинов: для матрицы (бины x ряды) возвращает
    (ряды x 5) в порядке STATISTICS.
    """
    return np.stack(
        [
            matrix.mean(axis=0),
            matrix.std(axis=0),
            matrix.min(axis=0),
            matrix.max(axis=0),
            np.percentile(matrix, 90, axis=0, method="linear"),
        ],
        axis=1,
    )


def _descriptors(bins, session_meta, settings):
    counts = load_counts(bins, settings)
    loads = load_profile(bins, settings)
    seconds = max(1, len(loads))
    by_class = dict.fromkeys(CoverageClass, 0.0)
    loads_by_ue = zip(session_meta.coverage_classes, session_meta.offered_load_bps)
    for coverage, offered in loads_by_ue:
        by_class[CoverageClass(coverage)] += offered
    return [
        session_meta.duration_s,
        len(bins),
        len(bins[0].ues),
        session_meta.full_buffer_fraction,
        by_class[CoverageClass.EXCELLENT],
        by_class[CoverageClass.MEDIUM],
        by_class[CoverageClass.POOR],
        counts.high / seconds,
        counts.mid / seconds,
        counts.low / seconds,
        counts.idle / seconds,
        float(np.mean(loads)) if loads else 0.0,
    ]


def features(bins, session_meta, settings=DEFAULT_SETTINGS, schema=None):
    """Детерминированный вектор признаков по бинам сессии."""
    if not bins:
        raise SessionTooShortError("Нет ни одного полного бина для признаков")
    ue_count = len(bins[0].ues)
    if schema is None:
        if ue_count == DEFAULT_UE_COUNT:
            schema = FEATURE_SCHEMA
        else:
            schema = build_schema(ue_count)
    if schema.ue_count != ue_count:
        raise ValueError(
            f"Схема рассчитана на {schema.ue_count} UE, в бинах {ue_count}"
        )

    cell = series_statistics(np.array([b.cell_vector() for b in bins]))
    ues = np.array([b.ue_matrix() for b in bins])
    per_ue = [series_statistics(ues[:, index, :]) for index in range(ue_count)]
    raw = np.concatenate(
        [
            cell.ravel(),
            *(stats.ravel() for stats in per_ue),
            _descriptors(bins, session_meta, settings),
        ]
    ).astype(float)

    values = np.clip((raw - schema.lower) / (schema.upper - schema.lower), 0.0, 1.0)
    return FeatureVector(values=values, raw=raw, schema_version=schema.version)
