import logging
import math

import numpy as np

from .cell import CellState, adapt_rank, allocate_tti, deliver_feedback, uplink_slot
from .channel import report_cqi, sinr_evolve
from .scenario import ScenarioError
from .state import UeState
from .traffic import TrafficSource

logger = logging.getLogger(__name__)


def session_streams(seed):
    """
    Независимые потоки случайных чисел сессии: канал, трафик, исходы DL, UL.
    Канал и трафик не зависят от параметров, поэтому при одном seed
    разные наборы параметров видят одну и ту же радиообстановку.
    """
    children = np.random.SeedSequence(seed).spawn(4)
    return tuple(np.random.default_rng(child) for child in children)


def run_session(scenario, params, seed, duration_s):
    """
    Симулирует ceil(duration_s * slots_per_second) слотов.

    Результат полностью определяется (scenario, params, seed).
    """
    if duration_s <= 0:
        raise ScenarioError(
            f"Длительность сессии должна быть положительной: {duration_s}"
        )
    settings = scenario.settings
    n_slots = math.ceil(duration_s * settings.slots_per_second)
    channel_rng, traffic_rng, link_rng, uplink_rng = session_streams(seed)

    ues = [
        UeState.initial(
            profile,
            settings,
            initial_rank=params.initial_rank,
            deviation_db=profile.sinr_stddev_db * channel_rng.standard_normal(),
        )
        for profile in scenario.ues
    ]
    sources = [
        TrafficSource(scenario.phase_segments(profile, duration_s), settings)
        for profile in scenario.ues
    ]
    cell = CellState(ues=ues, settings=settings)
    ue_inputs = list(zip(ues, scenario.ues, sources))

    traces = []
    for slot in range(n_slots):
        cell.slot = slot
        for ue, profile, source in ue_inputs:
            source.feed(slot, ue, traffic_rng)
            sinr_evolve(ue, profile, channel_rng, settings.ar_coeff)
            report_cqi(ue, params.cqi_filter_coeff, settings)
        deliver_feedback(cell, params)
        adapt_rank(cell, params)
        if settings.is_downlink(slot):
            traces.append(allocate_tti(cell, params, link_rng))
        else:
            traces.append(uplink_slot(cell, params, uplink_rng))

    logger.debug("Сессия seed=%s: %s слотов, сценарий %s", seed, n_slots, scenario.name)
    return traces
