from dataclasses import asdict, dataclass, fields

import numpy as np

from scheduler.channel import DEFAULT_SETTINGS
from scheduler.scenario import CoverageClass

from .aggregation import CCE_FIELDS


class SessionTooShortError(ValueError):
    """В сессии нет ни одного полного бина."""


@dataclass(frozen=True)
class KpiVector:
    """
    KPI сессии. Пропускные способности в бит/с, доли в [0, 1].
    """

    dl_mac_throughput_bps: float = 0.0
    dl_rlc_throughput_bps: float = 0.0
    dl_ack_ratio: float = 0.0
    ul_ack_ratio: float = 0.0
    dl_mean_mcs: float = 0.0
    cce2_utilization: float = 0.0
    dl_nack_ratio: float = 0.0
    dl_dtx_ratio: float = 0.0
    dl_pdcp_throughput_bps: float = 0.0
    cell_edge_throughput_bps: float = 0.0
    rb_utilization: float = 0.0

    def as_dict(self):
        return asdict(self)

    @classmethod
    def names(cls):
        return tuple(f.name for f in fields(cls))


KPI_NAMES = KpiVector.names()


def _total(bins, name):
    return sum(b[name] for b in bins)


def _share(numerator, denominator):
    return numerator / denominator if denominator else 0.0


def cell_edge_ue(bins, coverage_classes=()):
    """
    Индекс UE на краю соты: первый UE класса Poor, без него - UE
    с наименьшим средним CQI за сессию.
    """
    for index, coverage in enumerate(coverage_classes):
        if CoverageClass(coverage) == CoverageClass.POOR:
            return index
    mean_cqi = np.mean([[ue["mean_cqi"] for ue in b.ues] for b in bins], axis=0)
    return int(np.argmin(mean_cqi))


def summarize(bins, settings=DEFAULT_SETTINGS, coverage_classes=()):
    """
    Сводит бины сессии в KpiVector.

    Доли и средний MCS взвешены числом запланированных TB;
    без единого назначения возвращается нулевой вектор.
    coverage_classes (по порядку UE) задаёт UE края соты.
    """
    if not bins:
        raise SessionTooShortError("Нет ни одного полного бина")
    if _total(bins, "dl_tb_count") == 0:
        return KpiVector()

    seconds = len(bins) * settings.bin_slots / settings.slots_per_second
    outcomes = sum(
        _total(bins, name) for name in ("dl_ack_count", "dl_nack_count", "dl_dtx_count")
    )
    ul_total = _total(bins, "ul_ack_count") + _total(bins, "ul_nack_count")
    cce_total = sum(_total(bins, name) for name in CCE_FIELDS)
    edge = cell_edge_ue(bins, coverage_classes)
    tb_count = _total(bins, "dl_tb_count")

    return KpiVector(
        dl_mac_throughput_bps=_total(bins, "dl_mac_bits") / seconds,
        dl_rlc_throughput_bps=_total(bins, "dl_rlc_bits") / seconds,
        dl_ack_ratio=_share(_total(bins, "dl_ack_count"), outcomes),
        ul_ack_ratio=_share(_total(bins, "ul_ack_count"), ul_total),
        dl_mean_mcs=_share(
            sum(b["mean_mcs"] * b["dl_tb_count"] for b in bins), tb_count
        ),
        cce2_utilization=_share(_total(bins, "cce_2"), cce_total),
        dl_nack_ratio=_share(_total(bins, "dl_nack_count"), outcomes),
        dl_dtx_ratio=_share(_total(bins, "dl_dtx_count"), outcomes),
        dl_pdcp_throughput_bps=_total(bins, "dl_pdcp_bits") / seconds,
        cell_edge_throughput_bps=sum(b.ues[edge]["mac_bits"] for b in bins) / seconds,
        rb_utilization=_share(
            _total(bins, "rb_used"), _total(bins, "dl_slots") * settings.n_rbs
        ),
    )
