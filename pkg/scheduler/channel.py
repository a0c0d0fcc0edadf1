"""Канал UE: AR(1) процесс SINR и фильтрованный отчёт CQI."""

import math

from .scenario import ScenarioError, SimulatorSettings

DEFAULT_SETTINGS = SimulatorSettings()
MAX_CQI = 15.0


def sinr_evolve(ue_state, profile, rng_stream, ar_coeff=DEFAULT_SETTINGS.ar_coeff):
    """
    Шаг AR(1) отклонения SINR от среднего класса покрытия.

    Дисперсия инноваций подобрана так, что стационарное СКО равно
    profile.sinr_stddev_db при любом ar_coeff.
    """
    innovation_std = profile.sinr_stddev_db * math.sqrt(1.0 - ar_coeff * ar_coeff)
    ue_state.deviation_db = (
        ar_coeff * ue_state.deviation_db
        + innovation_std * rng_stream.standard_normal()
    )
    ue_state.sinr_db = profile.mean_sinr_db + ue_state.deviation_db
    return ue_state


def instantaneous_cqi(sinr_db, settings=DEFAULT_SETTINGS):
    cqi = (sinr_db + settings.cqi_offset_db) / settings.cqi_db_per_step
    return min(MAX_CQI, max(0.0, cqi))


def cqi_to_sinr(cqi, settings=DEFAULT_SETTINGS):
    return cqi * settings.cqi_db_per_step - settings.cqi_offset_db


def report_cqi(ue_state, cqi_filter_coeff, settings=DEFAULT_SETTINGS):
    """Экспоненциальный фильтр CQI; возвращает новое значение filtered_cqi."""
    if not 0.0 <= cqi_filter_coeff <= 1.0:
        raise ScenarioError(f"Коэффициент фильтра CQI вне [0, 1]: {cqi_filter_coeff}")
    current = instantaneous_cqi(ue_state.sinr_db, settings)
    ue_state.filtered_cqi = (
        1.0 - cqi_filter_coeff
    ) * ue_state.filtered_cqi + cqi_filter_coeff * current
    return ue_state.filtered_cqi


def supported_rank(sinr_db, settings=DEFAULT_SETTINGS):
    excess = max(0.0, sinr_db - settings.rank_sinr_threshold_db)
    return min(8, 1 + int(excess // settings.rank_sinr_step_db))
