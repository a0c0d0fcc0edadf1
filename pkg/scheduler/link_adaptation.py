"""Выбор MCS, внешний контур OLLA и модель исхода передачи TB."""

import math
from bisect import bisect_right

from .channel import DEFAULT_SETTINGS, cqi_to_sinr
from .tables import BLER_THRESHOLD_DB, MCS_COUNT, bler_threshold
from .trace import Outcome

MAX_MCS = MCS_COUNT - 1


def rank_penalty_db(rank, settings=DEFAULT_SETTINGS):
    return (rank - 1) * settings.rank_penalty_db


def estimated_sinr(ue_state, settings=DEFAULT_SETTINGS):
    """Оценка SINR на слой: обратное отображение CQI + смещение OLLA."""
    return (
        cqi_to_sinr(ue_state.filtered_cqi, settings)
        - rank_penalty_db(ue_state.rank, settings)
        + ue_state.olla_offset_db
    )


def highest_mcs(sinr_db):
    """Наибольший MCS, чей порог BLER не выше оценки SINR (иначе 0)."""
    return max(0, bisect_right(BLER_THRESHOLD_DB, sinr_db) - 1)


def mcs_target(ue_state, params, settings=DEFAULT_SETTINGS):
    mcs = highest_mcs(estimated_sinr(ue_state, settings))
    if params.adaptive_mcs_selection and (
        ue_state.initial_error_rate > 2.0 * params.ibler_target
    ):
        mcs = max(0, mcs - 1)
    return mcs


def smooth_mcs(previous, target, strength):
    if previous is None or strength == 0.0:
        return float(target)
    return strength * previous + (1.0 - strength) * target


def select_mcs(ue_state, params, settings=DEFAULT_SETTINGS):
    """
    MCS для новой передачи. Не меняет состояние UE: сглаживатель
    обновляется планировщиком только при фактическом назначении.
    """
    target = mcs_target(ue_state, params, settings)
    smoothed = smooth_mcs(ue_state.mcs_smoothed, target, params.mcs_filter / 2.0)
    return min(math.floor(smoothed + 0.5), params.max_mcs_cap, MAX_MCS)


def olla_update(
    offset_db,
    outcome,
    ibler_target,
    step_down_db=DEFAULT_SETTINGS.olla_step_down_db,
    limit_db=DEFAULT_SETTINGS.olla_limit_db,
):
    """
    Шаг внешнего контура по исходу первичной передачи.

    Шаг вверх step_down * p / (1 - p) делает долю NACK равной p
    в неподвижной точке.
    """
    if not 0.0 <= ibler_target < 1.0:
        raise ValueError(f"ibler_target должен лежать в [0, 1): {ibler_target}")
    if outcome == Outcome.ACK:
        offset_db += step_down_db * ibler_target / (1.0 - ibler_target)
    else:
        offset_db -= step_down_db
    return min(limit_db, max(-limit_db, offset_db))


def block_error_rate(mcs, effective_sinr_db, slope_db=DEFAULT_SETTINGS.bler_slope_db):
    exponent = (effective_sinr_db - bler_threshold(mcs)) / slope_db
    exponent = min(50.0, max(-50.0, exponent))
    return 1.0 / (1.0 + math.exp(exponent))


def transmit_outcome(
    mcs,
    sinr_db,
    rank,
    pmi_enhancement,
    rng_stream,
    *,
    retx_attempt=0,
    p_dtx=None,
    settings=DEFAULT_SETTINGS,
):
    """
    Исход передачи TB: DTX с вероятностью p_dtx, иначе NACK с вероятностью BLER.

    Обе случайные величины тянутся всегда, чтобы поток случайных чисел
    не зависел от исхода.
    """
    if p_dtx is None:
        p_dtx = settings.p_dtx
    effective = (
        sinr_db
        + (settings.pmi_gain_db if pmi_enhancement else 0.0)
        - rank_penalty_db(rank, settings)
        + settings.harq_combining_gain_db * retx_attempt
    )
    dtx_draw = rng_stream.random()
    error_draw = rng_stream.random()
    if dtx_draw < p_dtx:
        return Outcome.DTX
    if error_draw < block_error_rate(mcs, effective, settings.bler_slope_db):
        return Outcome.NACK
    return Outcome.ACK
