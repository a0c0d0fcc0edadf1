import csv

from .aggregation import CELL_SERIES, UE_SERIES
from .summary import KPI_NAMES


def bin_header(ue_count):
    header = ["bin_index", *CELL_SERIES]
    for ue in range(ue_count):
        header.extend(f"ue{ue}_{series}" for series in UE_SERIES)
    return header


def write_bins_csv(bins, path):
    """Бины сессии, одна строка на бин."""
    ue_count = len(bins[0].ues) if bins else 0
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(bin_header(ue_count))
        for b in bins:
            row = [b.bin_index, *(repr(b.cell[name]) for name in CELL_SERIES)]
            for ue in b.ues:
                row.extend(repr(ue[name]) for name in UE_SERIES)
            writer.writerow(row)


def write_kpi_csv(rows, path, key_columns=("session",)):
    """
    Сводка KPI по сессиям. rows - пары (ключ, KpiVector), где ключ -
    кортеж значений для key_columns.
    """
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([*key_columns, *KPI_NAMES])
        for key, kpis in rows:
            values = kpis.as_dict()
            writer.writerow([*key, *(repr(values[name]) for name in KPI_NAMES)])
