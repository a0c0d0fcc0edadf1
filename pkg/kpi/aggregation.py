"""Агрегация трассы сессии в бины по bin_slots слотов (по умолчанию 2000 = 1 с)."""

from collections import Counter
from dataclasses import dataclass

import numpy as np

from scheduler.channel import DEFAULT_SETTINGS
from scheduler.tables import AGGREGATION_LEVELS
from scheduler.trace import Outcome, SlotKind

CELL_SERIES = (
    "dl_mac_bits",
    "dl_rlc_bits",
    "dl_pdcp_bits",
    "ul_ack_count",
    "ul_nack_count",
    "dl_ack_count",
    "dl_nack_count",
    "dl_dtx_count",
    "scheduled_dl_ttis",
    "rb_used",
    "cce_2",
    "cce_4",
    "cce_8",
    "cce_16",
    "mean_mcs",
    "mean_cqi",
    "mean_rank",
    "buffer_bits_end",
    "retx_count",
    "dl_slots",
    "ul_slots",
    "dl_tb_count",
    "initial_tx_count",
    "initial_error_count",
    "retx_bits",
    "dl_ack_bits",
    "max_scheduled_ues",
    "mean_scheduled_ues",
    "rb_utilization",
    "cce_used",
    "cce_utilization",
    "std_mcs",
    "std_cqi",
    "min_cqi",
    "max_cqi",
    "mean_buffer_bits",
)

UE_SERIES = (
    "mac_bits",
    "ack_ratio",
    "dtx_ratio",
    "mean_cqi",
    "mean_mcs",
    "rb_share",
    "buffer_bits",
    "scheduled_ttis",
)

CCE_FIELDS = ("cce_2", "cce_4", "cce_8", "cce_16")


@dataclass(frozen=True)
class AggregatedBin:
    """
    Счётчики одного бина. cell - словарь по CELL_SERIES,
    ues - кортеж словарей по UE_SERIES (по одному на UE).
    """

    bin_index: int
    cell: dict
    ues: tuple

    def __getitem__(self, name):
        return self.cell[name]

    def cell_vector(self):
        return np.array([self.cell[name] for name in CELL_SERIES], dtype=float)

    def ue_matrix(self):
        return np.array(
            [[ue[name] for name in UE_SERIES] for ue in self.ues], dtype=float
        ).reshape(len(self.ues), len(UE_SERIES))


def _ratio(numerator, denominator):
    return numerator / denominator if denominator else 0.0


def _mean(values):
    return float(np.mean(values)) if values else 0.0


def _ue_counters(slots, ue_index, rb_used_total):
    records = [trace.ues[ue_index] for trace in slots]
    scheduled = [record for record in records if record.scheduled]
    outcomes = Counter(Outcome(record.outcome) for record in scheduled)
    return {
        "mac_bits": float(sum(record.tb_bits for record in scheduled)),
        "ack_ratio": _ratio(outcomes[Outcome.ACK], len(scheduled)),
        "dtx_ratio": _ratio(outcomes[Outcome.DTX], len(scheduled)),
        "mean_cqi": float(np.mean([record.cqi for record in records])),
        "mean_mcs": _mean([record.mcs for record in scheduled]),
        "rb_share": _ratio(sum(record.rbs for record in scheduled), rb_used_total),
        "buffer_bits": float(records[-1].buffer_bits),
        "scheduled_ttis": float(len(scheduled)),
    }


def aggregate_bin(bin_index, slots, settings=DEFAULT_SETTINGS):
    """Точные суммы и средние по слотам одного бина."""
    downlink = [trace for trace in slots if trace.slot_kind == SlotKind.DOWNLINK]
    uplink = [trace for trace in slots if trace.slot_kind != SlotKind.DOWNLINK]
    scheduled = [
        record for trace in downlink for record in trace.ues if record.scheduled
    ]
    retx = [record for record in scheduled if record.is_retx]
    initial = [record for record in scheduled if not record.is_retx]
    outcomes = Counter(Outcome(record.outcome) for record in scheduled)
    ul_outcomes = Counter(Outcome(trace.ul_outcome) for trace in uplink)
    cce = np.sum([trace.cce_usage for trace in slots], axis=0)
    cqi = np.array([record.cqi for trace in slots for record in trace.ues], dtype=float)
    mcs = np.array([record.mcs for record in scheduled], dtype=float)
    per_slot = [trace.scheduled_count for trace in downlink]
    buffers = [sum(record.buffer_bits for record in trace.ues) for trace in slots]

    mac_bits = float(sum(record.tb_bits for record in scheduled))
    retx_bits = float(sum(record.tb_bits for record in retx))
    rlc_bits = mac_bits - retx_bits
    rb_used = float(sum(trace.total_rbs_used for trace in downlink))
    cce_used = float(np.dot(cce, AGGREGATION_LEVELS))

    cell = {
        "dl_mac_bits": mac_bits,
        "dl_rlc_bits": rlc_bits,
        "dl_pdcp_bits": rlc_bits * (1.0 - settings.pdcp_header_fraction),
        "ul_ack_count": float(ul_outcomes[Outcome.ACK]),
        "ul_nack_count": float(ul_outcomes[Outcome.NACK]),
        "dl_ack_count": float(outcomes[Outcome.ACK]),
        "dl_nack_count": float(outcomes[Outcome.NACK]),
        "dl_dtx_count": float(outcomes[Outcome.DTX]),
        "scheduled_dl_ttis": float(sum(1 for count in per_slot if count)),
        "rb_used": rb_used,
        "mean_mcs": float(mcs.mean()) if mcs.size else 0.0,
        "mean_cqi": float(cqi.mean()),
        "mean_rank": _mean([record.rank for record in scheduled]),
        "buffer_bits_end": float(buffers[-1]),
        "retx_count": float(len(retx)),
        "dl_slots": float(len(downlink)),
        "ul_slots": float(len(uplink)),
        "dl_tb_count": float(len(scheduled)),
        "initial_tx_count": float(len(initial)),
        "initial_error_count": float(
            sum(1 for record in initial if record.outcome != Outcome.ACK)
        ),
        "retx_bits": retx_bits,
        "dl_ack_bits": float(
            sum(record.tb_bits for record in scheduled if record.outcome == Outcome.ACK)
        ),
        "max_scheduled_ues": float(max(per_slot, default=0)),
        "mean_scheduled_ues": _ratio(len(scheduled), len(downlink)),
        "rb_utilization": _ratio(rb_used, len(downlink) * settings.n_rbs),
        "cce_used": cce_used,
        "cce_utilization": _ratio(cce_used, len(downlink) * settings.cce_budget),
        "std_mcs": float(mcs.std()) if mcs.size else 0.0,
        "std_cqi": float(cqi.std()),
        "min_cqi": float(cqi.min()),
        "max_cqi": float(cqi.max()),
        "mean_buffer_bits": float(np.mean(buffers)),
    }
    cell.update({name: float(count) for name, count in zip(CCE_FIELDS, cce)})

    ue_count = len(slots[0].ues)
    ues = tuple(_ue_counters(slots, index, rb_used) for index in range(ue_count))
    return AggregatedBin(bin_index=bin_index, cell=cell, ues=ues)


def aggregate(traces, settings=DEFAULT_SETTINGS):
    """
    Делит трассу на floor(len / bin_slots) бинов; неполный хвост отбрасывается.
    Меньше bin_slots слотов -> пустой список.
    """
    size = settings.bin_slots
    return [
        aggregate_bin(index, traces[index * size : (index + 1) * size], settings)
        for index in range(len(traces) // size)
    ]
