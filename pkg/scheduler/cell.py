"""Планировщик DL одной соты: HARQ, PF-ранжирование, RB и бюджет CCE."""

import logging
import math
from dataclasses import dataclass, field

from .channel import DEFAULT_SETTINGS, supported_rank
from .link_adaptation import (mcs_target, olla_update, select_mcs, smooth_mcs,
                              transmit_outcome)
from .state import HarqState
from .tables import AGGREGATION_LEVELS, aggregation_level, bits_per_rb
from .trace import Outcome, SlotKind, TtiTrace, UeRecord

logger = logging.getLogger(__name__)

LEVEL_POSITION = {level: position for position, level in enumerate(AGGREGATION_LEVELS)}
NON_ADAPTIVE_LEVEL = 8


@dataclass
class CellState:
    """Изменяемое состояние соты внутри одной сессии."""

    ues: list
    settings: object = DEFAULT_SETTINGS
    slot: int = 0
    feedback_queue: dict = field(default_factory=dict)


def _assignment_level(ue_state, params):
    if params.pdcch_adaptive:
        return aggregation_level(ue_state.filtered_cqi)
    return NON_ADAPTIVE_LEVEL


def _dtx_probability(ue_state, level, settings):
    # Уровень ниже рекомендованного по CQI -> UE чаще пропускает назначение.
    if level < aggregation_level(ue_state.filtered_cqi):
        return min(1.0, settings.p_dtx * settings.pdcch_underprovision_dtx_factor)
    return settings.p_dtx


def _rbs_for(bits, mcs, rank, available_rbs):
    per_rb = bits_per_rb(mcs) * rank
    return min(available_rbs, max(1, math.ceil(bits / per_rb)))


def split_rbs(weights, needs, budget):
    """
    Делит budget RB между UE пропорционально весам (PF-метрике), доля
    каждого не больше его потребности. Остаток от округления и от
    насыщенных UE раздаётся по порядку списка (порядок PF).
    """
    total = sum(weights)
    if total <= 0:
        weights = [1.0] * len(weights)
        total = float(len(weights))
    # 1e-9 гасит ошибку округления при равных весах
    shares = [
        min(need, math.floor(budget * weight / total + 1e-9))
        for weight, need in zip(weights, needs)
    ]
    leftover = budget - sum(shares)
    for position, need in enumerate(needs):
        if leftover <= 0:
            break
        extra = min(leftover, need - shares[position])
        shares[position] += extra
        leftover -= extra
    return shares


def _select_within_cce(cell_state, params, candidates, cce_left, rbs_left):
    """
    Кандидаты в порядке PF, поместившиеся в бюджет CCE; не больше одного UE
    на каждый свободный RB. Возвращает (метрика, потребность в RB, кандидат).
    """
    selected = []
    for candidate in candidates:
        if len(selected) >= rbs_left:
            break
        negative_metric, ue_index, mcs, _ = candidate
        ue = cell_state.ues[ue_index]
        level = _assignment_level(ue, params)
        if level > cce_left:
            logger.debug("UE %s не помещается в бюджет CCE", ue_index)
            continue
        cce_left -= level
        need = _rbs_for(ue.schedulable_bits, mcs, ue.rank, rbs_left)
        selected.append((-negative_metric, need, candidate))
    return selected


def _arm_feedback(cell, ue_index, process):
    due = cell.slot + cell.settings.feedback_delay_slots
    process.feedback_slot = due
    cell.feedback_queue.setdefault(due, []).append((ue_index, process))


def allocate_tti(cell_state, params, rng_stream):
    """
    Планирование одного слота DL.

    1. Ожидающие повторы HARQ (при harq_enhancement - на MCS ниже).
    2. Новые данные по убыванию PF-метрики rate / T^fairness_exponent.
    3. Каждое назначение занимает CCE; не поместившиеся UE выпадают из слота.
    4. Свободные RB делятся между выбранными UE пропорционально PF-метрике
       с ограничением по буферу (split_rbs).
    Исход передачи разыгрывается сразу, буфер уменьшается по ACK через
    feedback_delay_slots.
    """
    settings = cell_state.settings
    rbs_left = settings.n_rbs
    cce_left = settings.cce_budget
    cce_usage = [0, 0, 0, 0]
    records = [None] * len(cell_state.ues)
    delivered = [0] * len(cell_state.ues)

    def assign(ue_index, ue, process, mcs, rbs, tb_bits, is_retx, level):
        nonlocal rbs_left, cce_left
        rbs_left -= rbs
        cce_left -= level
        cce_usage[LEVEL_POSITION[level]] += 1
        outcome = transmit_outcome(
            mcs,
            ue.sinr_db,
            process.rank,
            params.pmi_enhancement,
            rng_stream,
            retx_attempt=process.retx_count,
            p_dtx=_dtx_probability(ue, level, settings),
            settings=settings,
        )
        process.state = HarqState.AWAITING_FEEDBACK
        process.outcome = outcome
        _arm_feedback(cell_state, ue_index, process)
        delivered[ue_index] = process.payload_bits
        records[ue_index] = UeRecord(
            scheduled=True,
            mcs=mcs,
            rbs=rbs,
            tb_bits=tb_bits,
            outcome=outcome,
            is_retx=is_retx,
            cqi=ue.filtered_cqi,
            rank=process.rank,
            buffer_bits=ue.buffer_bits,
        )

    for ue_index, ue in enumerate(cell_state.ues):
        process = ue.pending_retx_process()
        if process is None:
            continue
        records[ue_index] = False
        level = _assignment_level(ue, params)
        mcs = max(0, process.mcs - 1) if params.harq_enhancement else process.mcs
        rbs = math.ceil(process.tb_bits / (bits_per_rb(mcs) * process.rank))
        if rbs > settings.n_rbs:
            # TB на пониженном MCS не помещается в полосу
            mcs = process.mcs
            rbs = math.ceil(process.tb_bits / (bits_per_rb(mcs) * process.rank))
        if level > cce_left or rbs > rbs_left:
            continue
        process.retx_count += 1
        assign(ue_index, ue, process, mcs, rbs, process.tb_bits, True, level)

    candidates = []
    for ue_index, ue in enumerate(cell_state.ues):
        if records[ue_index] is not None or ue.schedulable_bits <= 0:
            continue
        process = ue.idle_process()
        if process is None:
            continue
        mcs = select_mcs(ue, params, settings)
        rate = bits_per_rb(mcs) * ue.rank * settings.n_rbs * settings.slots_per_second
        metric = rate / ue.avg_throughput_bps**params.fairness_exponent
        candidates.append((-metric, ue_index, mcs, process))
    candidates.sort(key=lambda item: (item[0], item[1]))

    selected = _select_within_cce(cell_state, params, candidates, cce_left, rbs_left)
    shares = split_rbs(
        [metric for metric, _, _ in selected],
        [need for _, need, _ in selected],
        rbs_left,
    )

    for (_, _, candidate), rbs in zip(selected, shares):
        if rbs == 0:
            continue
        _, ue_index, mcs, process = candidate
        ue = cell_state.ues[ue_index]
        available = ue.schedulable_bits
        tb_bits = rbs * bits_per_rb(mcs) * ue.rank
        process.tb_bits = tb_bits
        process.payload_bits = min(tb_bits, available)
        process.mcs = mcs
        process.rank = ue.rank
        process.retx_count = 0
        ue.inflight_bits += process.payload_bits
        ue.mcs_smoothed = smooth_mcs(
            ue.mcs_smoothed, mcs_target(ue, params, settings), params.mcs_filter / 2.0
        )
        level = _assignment_level(ue, params)
        assign(ue_index, ue, process, mcs, rbs, tb_bits, False, level)

    window = settings.pf_window_slots
    for ue_index, ue in enumerate(cell_state.ues):
        if not records[ue_index]:
            records[ue_index] = UeRecord.idle(ue)
        rate_now = delivered[ue_index] * settings.slots_per_second
        ue.avg_throughput_bps = max(
            1.0, (1.0 - 1.0 / window) * ue.avg_throughput_bps + rate_now / window
        )

    return TtiTrace(
        tti_index=cell_state.slot,
        slot_kind=SlotKind.DOWNLINK,
        ues=tuple(records),
        cce_usage=tuple(cce_usage),
        total_rbs_used=settings.n_rbs - rbs_left,
    )


def deliver_feedback(cell_state, params):
    """
    Применяет ACK/NACK/DTX, пришедшие в текущем слоте: буфер и OLLA
    (только первичные передачи), повтор или сброс процесса.
    """
    settings = cell_state.settings
    for ue_index, process in cell_state.feedback_queue.pop(cell_state.slot, ()):
        ue = cell_state.ues[ue_index]
        outcome = process.outcome
        if process.retx_count == 0:
            ue.olla_offset_db = olla_update(
                ue.olla_offset_db,
                outcome,
                params.ibler_target,
                settings.olla_step_down_db,
                settings.olla_limit_db,
            )
            ue.record_initial_outcome(outcome != Outcome.ACK)
        if outcome == Outcome.ACK:
            ue.buffer_bits = max(0, ue.buffer_bits - process.payload_bits)
            ue.inflight_bits -= process.payload_bits
            process.release()
        elif process.retx_count < settings.max_retx:
            process.state = HarqState.PENDING_RETX
        else:
            logger.debug(
                "UE %s: TB сброшен после %s повторов", ue_index, process.retx_count
            )
            ue.inflight_bits -= process.payload_bits
            process.release()


def adapt_rank(cell_state, params):
    """Ранг следует за SINR, но не превышает initial_rank."""
    for ue in cell_state.ues:
        supported = supported_rank(ue.sinr_db, cell_state.settings)
        ue.rank = max(1, min(params.initial_rank, supported))


def uplink_slot(cell_state, params, rng_stream):
    """
    Слот UL: синтетическая обратная связь UL HARQ. Вероятность ACK почти
    не зависит от параметров, кроме слабой связи с PMI и начальным рангом.
    """
    settings = cell_state.settings
    ack_ratio = settings.ul_base_ack_ratio
    if params.pmi_enhancement:
        ack_ratio += settings.ul_coupling
    ack_ratio += settings.ul_coupling * (8 - params.initial_rank) / 7.0
    ack_ratio += settings.ul_ack_noise * (rng_stream.random() - 0.5)
    outcome = Outcome.ACK if rng_stream.random() < ack_ratio else Outcome.NACK
    return TtiTrace(
        tti_index=cell_state.slot,
        slot_kind=SlotKind.OTHER,
        ues=tuple(UeRecord.idle(ue) for ue in cell_state.ues),
        ul_outcome=outcome,
    )
