import csv
from dataclasses import dataclass

from django.db import models


class Outcome(models.TextChoices):
    ACK = "ack", "ACK"
    NACK = "nack", "NACK"
    DTX = "dtx", "DTX"
    NOT_SCHEDULED = "not_scheduled", "Не запланирован"


class SlotKind(models.TextChoices):
    DOWNLINK = "downlink", "Нисходящий"
    OTHER = "other", "Прочий"


@dataclass(frozen=True, slots=True)
class UeRecord:
    scheduled: bool
    mcs: int
    rbs: int
    tb_bits: int
    outcome: str
    is_retx: bool
    cqi: float
    rank: int
    buffer_bits: int

    @classmethod
    def idle(cls, ue_state):
        return cls(
            scheduled=False,
            mcs=0,
            rbs=0,
            tb_bits=0,
            outcome=Outcome.NOT_SCHEDULED,
            is_retx=False,
            cqi=ue_state.filtered_cqi,
            rank=ue_state.rank,
            buffer_bits=ue_state.buffer_bits,
        )


@dataclass(frozen=True, slots=True)
class TtiTrace:
    """
    Итог одного слота. cce_usage - число назначений PDCCH на уровнях
    агрегации 2/4/8/16; ul_outcome есть только у слотов UL.
    """

    tti_index: int
    slot_kind: str
    ues: tuple
    cce_usage: tuple = (0, 0, 0, 0)
    total_rbs_used: int = 0
    ul_outcome: str | None = None

    @property
    def scheduled_count(self):
        return sum(1 for record in self.ues if record.scheduled)


CELL_COLUMNS = (
    "tti_index",
    "slot_kind",
    "cce_2",
    "cce_4",
    "cce_8",
    "cce_16",
    "total_rbs_used",
    "ul_outcome",
)

UE_COLUMNS = (
    "scheduled",
    "mcs",
    "rbs",
    "tb_bits",
    "outcome",
    "is_retx",
    "cqi",
    "rank",
    "buffer_bits",
)


def trace_header(ue_count):
    """Фиксированный порядок колонок CSV: поля слота, затем поля каждого UE."""
    header = list(CELL_COLUMNS)
    for ue in range(ue_count):
        header.extend(f"ue{ue}_{column}" for column in UE_COLUMNS)
    return header


def trace_row(trace):
    row = [
        trace.tti_index,
        trace.slot_kind,
        *trace.cce_usage,
        trace.total_rbs_used,
        trace.ul_outcome or "",
    ]
    for record in trace.ues:
        row.extend(
            [
                int(record.scheduled),
                record.mcs,
                record.rbs,
                record.tb_bits,
                record.outcome,
                int(record.is_retx),
                repr(record.cqi),
                record.rank,
                record.buffer_bits,
            ]
        )
    return row


def write_trace_csv(traces, path):
    """Выгрузка трассы сессии в CSV; float пишутся через repr."""
    ue_count = len(traces[0].ues) if traces else 0
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(trace_header(ue_count))
        for trace in traces:
            writer.writerow(trace_row(trace))
