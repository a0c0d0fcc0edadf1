"""Таблицы канального уровня: пороги BLER и спектральная эффективность MCS 0..27."""

MCS_COUNT = 28

# Порог SINR (дБ), при котором BLER = 50%: от -6 дБ с шагом 1.1 дБ.
BLER_THRESHOLD_DB = tuple(round(-6.0 + 1.1 * mcs, 2) for mcs in range(MCS_COUNT))

# Биты на символ (Qm * R) для таблицы MCS с 256QAM.
SPECTRAL_EFFICIENCY = (
    0.2344,
    0.3770,
    0.6016,
    0.8770,
    1.1758,
    1.4766,
    1.6953,
    1.9141,
    2.1602,
    2.4063,
    2.5703,
    2.7305,
    3.0293,
    3.3223,
    3.6094,
    3.9023,
    4.2129,
    4.5234,
    4.8164,
    5.1152,
    5.3320,
    5.5547,
    5.8906,
    6.2266,
    6.5703,
    6.9141,
    7.1602,
    7.4063,
)

# 12 поднесущих x 12 символов данных в слоте.
RESOURCE_ELEMENTS_PER_RB = 144

BITS_PER_RB = tuple(int(RESOURCE_ELEMENTS_PER_RB * se) for se in SPECTRAL_EFFICIENCY)

# Уровни агрегации PDCCH, порядок совпадает со счётчиками cce_usage.
AGGREGATION_LEVELS = (2, 4, 8, 16)


def bler_threshold(mcs):
    return BLER_THRESHOLD_DB[mcs]


def bits_per_rb(mcs):
    return BITS_PER_RB[mcs]


def aggregation_level(cqi):
    """Уровень агрегации по полосе CQI: чем хуже канал, тем больше CCE."""
    if cqi >= 12:
        return 2
    if cqi >= 8:
        return 4
    if cqi >= 4:
        return 8
    return 16
