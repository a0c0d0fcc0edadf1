import os
import tempfile
from dataclasses import replace
from pathlib import Path
from unittest import skipUnless

import numpy as np
from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

from actions.space import (DEFAULT_SPECS, SME_BASELINE, SamplingMode,
                           sample_candidate, validate)
from kpi.aggregation import aggregate
from kpi.summary import summarize

from .cell import CellState, allocate_tti, deliver_feedback, split_rbs
from .channel import instantaneous_cqi, report_cqi, sinr_evolve
from .link_adaptation import (MAX_MCS, olla_update, select_mcs,
                              transmit_outcome)
from .scenario import (AppKind, AppPhase, CoverageClass, Scenario,
                       ScenarioError, SimulatorSettings, UeProfile,
                       load_scenario)
from .serializers import ScenarioSerializer
from .session import run_session
from .state import HarqState, UeState
from .tables import BLER_THRESHOLD_DB, bits_per_rb
from .trace import Outcome, SlotKind, trace_header, write_trace_csv
from .traffic import TrafficSource

RUN_SLOW_TESTS = bool(os.getenv("RUN_SLOW_TESTS"))
POOR_UE_DOCUMENT = {
    "ue_id": 0,
    "coverage_class": "poor",
    "mean_sinr_db": 0,
    "sinr_stddev_db": 1,
}


def with_params(**overrides):
    values = SME_BASELINE.as_dict()
    values.update(overrides)
    return validate(values)


def single_ue_scenario(mean_sinr_db=10.0, stddev_db=0.0, duration_s=100.0, **settings):
    profile = UeProfile(
        ue_id=0,
        coverage_class=CoverageClass.MEDIUM,
        mean_sinr_db=mean_sinr_db,
        sinr_stddev_db=stddev_db,
        traffic_profile=(AppPhase(AppKind.SPEED_TEST, 0.0, duration_s),),
    )
    return Scenario(
        name="single", ues=(profile,), settings=SimulatorSettings(**settings)
    )


def full_buffer_scenario(duration_s=100.0):
    """Три UE с полным буфером: отличное, среднее и плохое покрытие."""
    profiles = tuple(
        UeProfile(
            index,
            coverage,
            mean,
            2.0,
            (AppPhase(AppKind.SPEED_TEST, 0.0, duration_s),),
        )
        for index, (coverage, mean) in enumerate(
            [
                (CoverageClass.EXCELLENT, 25.0),
                (CoverageClass.MEDIUM, 12.0),
                (CoverageClass.POOR, 0.0),
            ]
        )
    )
    return Scenario(name="pf", ues=profiles)


def random_scenario(rng):
    """Случайный сценарий из 1-4 UE с одной фазой трафика на 1 с."""
    means = {
        CoverageClass.EXCELLENT: 25.0,
        CoverageClass.MEDIUM: 12.0,
        CoverageClass.POOR: 0.0,
    }
    kinds = list(AppKind)
    profiles = []
    for index in range(int(rng.integers(1, 5))):
        coverage = list(means)[int(rng.integers(3))]
        kind = kinds[int(rng.integers(len(kinds)))]
        rate = float(rng.uniform(1e5, 5e7))
        profiles.append(
            UeProfile(
                index,
                coverage,
                means[coverage],
                float(rng.uniform(0.0, 4.0)),
                (AppPhase(kind, 0.0, 1.0, rate),),
            )
        )
    return Scenario(name="random", ues=tuple(profiles))


class ChannelTestCase(SimpleTestCase):
    """
    Тесты канала: AR(1) процесс SINR и фильтр CQI.
    """

    def setUp(self):
        self.rng = np.random.default_rng(7)

    def test_zero_noise_keeps_mean(self):
        """
        При нулевом СКО SINR в каждом слоте равен среднему класса покрытия.
        """
        profile = UeProfile(0, CoverageClass.POOR, 3.5, 0.0)
        ue = UeState.initial(profile, SimulatorSettings())
        for _ in range(100):
            sinr_evolve(ue, profile, self.rng)
            self.assertEqual(ue.sinr_db, 3.5)

    def test_white_noise_stddev(self):
        """
        При ar_coeff = 0 отклонения независимы, выборочное СКО близко к заданному.
        """
        profile = UeProfile(0, CoverageClass.MEDIUM, 12.0, 3.0)
        ue = UeState.initial(profile, SimulatorSettings())
        samples = np.empty(200_000)
        for index in range(samples.size):
            sinr_evolve(ue, profile, self.rng, ar_coeff=0.0)
            samples[index] = ue.sinr_db
        self.assertAlmostEqual(samples.std() / 3.0, 1.0, delta=0.02)

    def test_long_run_mean_poor_ue(self):
        """
        Долгосрочное среднее SINR UE с плохим покрытием остаётся около 0 дБ.
        """
        profile = UeProfile(0, CoverageClass.POOR, 0.0, 3.0)
        ue = UeState.initial(profile, SimulatorSettings())
        total = 0.0
        for _ in range(200_000):
            sinr_evolve(ue, profile, self.rng)
            total += ue.sinr_db
        self.assertLess(abs(total / 200_000), 0.5)

    def test_cqi_filter(self):
        """
        Фильтр CQI: коэффициент 1 - без фильтра, 0 - значение заморожено,
        0.5 - середина между старым и новым значением.
        """
        ue = UeState(sinr_db=22.0, filtered_cqi=10.0)
        self.assertEqual(report_cqi(ue, 0.5), 12.0)

        ue = UeState(sinr_db=22.0, filtered_cqi=10.0)
        self.assertEqual(report_cqi(ue, 0.0), 10.0)

        ue = UeState(sinr_db=22.0, filtered_cqi=10.0)
        self.assertEqual(report_cqi(ue, 1.0), instantaneous_cqi(22.0))

    def test_cqi_clamped(self):
        self.assertEqual(instantaneous_cqi(100.0), 15.0)
        self.assertEqual(instantaneous_cqi(-100.0), 0.0)

    def test_cqi_filter_out_of_range(self):
        ue = UeState(sinr_db=0.0, filtered_cqi=3.0)
        with self.assertRaises(ScenarioError):
            report_cqi(ue, 1.5)


class LinkAdaptationTestCase(SimpleTestCase):
    """
    Тесты выбора MCS, OLLA и модели исхода передачи.
    """

    def setUp(self):
        self.params = with_params(mcs_filter=0.0, adaptive_mcs_selection=False)

    def test_threshold_table_increasing(self):
        self.assertEqual(len(BLER_THRESHOLD_DB), 28)
        for lower, higher in zip(BLER_THRESHOLD_DB, BLER_THRESHOLD_DB[1:]):
            self.assertLess(lower, higher)

    def test_mcs_saturation(self):
        """
        Смещение OLLA на верхней границе и отличное покрытие
        -> MCS = min(27, max_mcs_cap).
        """
        ue = UeState(
            sinr_db=25.0, filtered_cqi=instantaneous_cqi(25.0), olla_offset_db=10.0
        )
        self.assertEqual(select_mcs(ue, self.params), MAX_MCS)
        capped = with_params(
            mcs_filter=0.0, adaptive_mcs_selection=False, max_mcs_cap=20
        )
        self.assertEqual(select_mcs(ue, capped), 20)

    def test_mcs_floor(self):
        ue = UeState(
            sinr_db=0.0, filtered_cqi=instantaneous_cqi(0.0), olla_offset_db=-10.0
        )
        self.assertEqual(select_mcs(ue, self.params), 0)

    def test_mcs_monotone_in_sinr(self):
        """
        Выбранный MCS не убывает при росте SINR от -5 до 30 дБ.
        """
        previous = -1
        for sinr in np.arange(-5.0, 30.01, 0.25):
            sinr = float(sinr)
            ue = UeState(sinr_db=sinr, filtered_cqi=instantaneous_cqi(sinr))
            mcs = select_mcs(ue, self.params)
            self.assertGreaterEqual(mcs, previous)
            previous = mcs

    def test_adaptive_selection_steps_down(self):
        """
        Адаптивный выбор снижает MCS на ступень, если доля ошибок выше 2x IBLER.
        """
        profile = UeProfile(0, CoverageClass.MEDIUM, 12.0, 0.0)
        ue = UeState.initial(profile, SimulatorSettings())
        for _ in range(10):
            ue.record_initial_outcome(True)
        adaptive = with_params(mcs_filter=0.0, adaptive_mcs_selection=True)
        self.assertEqual(select_mcs(ue, adaptive), select_mcs(ue, self.params) - 1)

    def test_select_mcs_is_pure(self):
        ue = UeState(
            sinr_db=12.0, filtered_cqi=instantaneous_cqi(12.0), mcs_smoothed=3.0
        )
        select_mcs(ue, with_params(mcs_filter=1.0))
        self.assertEqual(ue.mcs_smoothed, 3.0)

    def test_olla_steps(self):
        """
        Шаг вверх step_down * p / (1 - p): симметричный при p = 0.5.
        """
        self.assertAlmostEqual(olla_update(0.0, Outcome.ACK, 0.5), 0.5)
        self.assertAlmostEqual(olla_update(0.0, Outcome.ACK, 0.1), 0.5 / 9.0)
        self.assertAlmostEqual(olla_update(0.0, Outcome.NACK, 0.1), -0.5)
        self.assertAlmostEqual(olla_update(0.0, Outcome.DTX, 0.1), -0.5)

    def test_olla_clamped(self):
        self.assertEqual(olla_update(9.9, Outcome.ACK, 0.5), 10.0)
        self.assertEqual(olla_update(-9.9, Outcome.NACK, 0.5), -10.0)

    def test_olla_rejects_full_ibler(self):
        with self.assertRaises(ValueError):
            olla_update(0.0, Outcome.ACK, 1.0)

    def test_high_sinr_always_ack(self):
        rng = np.random.default_rng(1)
        outcomes = {
            transmit_outcome(27, 200.0, 1, False, rng, p_dtx=0.0) for _ in range(1000)
        }
        self.assertEqual(outcomes, {Outcome.ACK})

    def test_midpoint_nack_rate(self):
        """
        SINR ровно на пороге MCS -> доля NACK около 0.5 * (1 - p_dtx).
        """
        rng = np.random.default_rng(2)
        draws = 100_000
        nacks = sum(
            transmit_outcome(10, BLER_THRESHOLD_DB[10], 1, False, rng) == Outcome.NACK
            for _ in range(draws)
        )
        self.assertAlmostEqual(nacks / draws, 0.5 * (1 - 0.005), delta=0.01)

    def test_dtx_rate(self):
        rng = np.random.default_rng(3)
        draws = 200_000
        dtx = sum(
            transmit_outcome(0, 30.0, 1, False, rng) == Outcome.DTX
            for _ in range(draws)
        )
        self.assertAlmostEqual(dtx / draws, 0.005, delta=0.001)

    def olla_nack_rate(self, target, duration_s):
        params = with_params(
            ibler_target=target, adaptive_mcs_selection=False, mcs_filter=0.0
        )
        scenario = single_ue_scenario(p_dtx=0.0)
        traces = run_session(scenario, params, seed=11, duration_s=duration_s)
        scheduled = [trace.ues[0] for trace in traces if trace.ues[0].scheduled]
        initial = [record for record in scheduled if not record.is_retx]
        nacks = sum(record.outcome == Outcome.NACK for record in initial)
        return nacks / len(initial), len(scheduled)

    def test_olla_fixed_point(self):
        """
        Доля NACK первичных передач UE со статичным SINR сходится к IBLER.
        """
        for target in (0.1, 0.3):
            with self.subTest(ibler_target=target):
                rate, _ = self.olla_nack_rate(target, duration_s=20.0)
                self.assertAlmostEqual(rate, target, delta=0.03)

    @skipUnless(RUN_SLOW_TESTS, "долгий тест: RUN_SLOW_TESTS=1")
    def test_olla_fixed_point_long_run(self):
        """
        То же на 10^5 запланированных слотах.
        """
        for target in (0.1, 0.3):
            with self.subTest(ibler_target=target):
                rate, scheduled = self.olla_nack_rate(target, duration_s=70.0)
                self.assertGreaterEqual(scheduled, 100_000)
                self.assertAlmostEqual(rate, target, delta=0.03)


class CellTestCase(SimpleTestCase):
    """
    Тесты планировщика одного слота DL.
    """

    def setUp(self):
        self.settings = SimulatorSettings()
        self.params = SME_BASELINE
        self.rng = np.random.default_rng(5)
        self.profiles = [
            UeProfile(0, CoverageClass.EXCELLENT, 25.0, 0.0),
            UeProfile(1, CoverageClass.MEDIUM, 12.0, 0.0),
            UeProfile(2, CoverageClass.POOR, 0.0, 0.0),
        ]

    def make_cell(self, profiles):
        ues = [UeState.initial(profile, self.settings) for profile in profiles]
        return CellState(ues=ues, settings=self.settings)

    def test_idle_cell(self):
        """
        Пустые буферы -> ни одного назначения, счётчики CCE нулевые.
        """
        cell = self.make_cell(self.profiles)
        trace = allocate_tti(cell, self.params, self.rng)
        self.assertEqual(trace.scheduled_count, 0)
        self.assertEqual(trace.cce_usage, (0, 0, 0, 0))
        self.assertEqual(trace.total_rbs_used, 0)
        for record in trace.ues:
            self.assertEqual(record.outcome, Outcome.NOT_SCHEDULED)

    def test_single_full_buffer_ue_gets_all_rbs(self):
        cell = self.make_cell(self.profiles[:1])
        cell.ues[0].buffer_bits = self.settings.full_buffer_bits
        trace = allocate_tti(cell, self.params, self.rng)
        record = trace.ues[0]
        self.assertTrue(record.scheduled)
        self.assertEqual(record.rbs, 273)
        self.assertEqual(record.tb_bits, 273 * bits_per_rb(record.mcs) * record.rank)
        self.assertIn(record.outcome, (Outcome.ACK, Outcome.NACK, Outcome.DTX))

    def test_split_rbs(self):
        """
        Доли пропорциональны весам, остаток уходит первым по порядку PF,
        доля не превышает потребности UE.
        """
        self.assertEqual(split_rbs([3.0, 1.0], [300, 300], 273), [205, 68])
        self.assertEqual(split_rbs([1.0, 1.0], [10, 1000], 100), [10, 90])
        self.assertEqual(split_rbs([1.0, 1.0], [5, 5], 100), [5, 5])
        self.assertEqual(split_rbs([0.0, 0.0, 0.0], [273] * 3, 273), [91, 91, 91])
        self.assertEqual(split_rbs([], [], 273), [])

    def test_identical_full_buffer_ues_share_band(self):
        profiles = [UeProfile(i, CoverageClass.MEDIUM, 12.0, 0.0) for i in range(3)]
        cell = self.make_cell(profiles)
        for ue in cell.ues:
            ue.buffer_bits = self.settings.full_buffer_bits
        trace = allocate_tti(cell, self.params, self.rng)
        self.assertEqual(trace.scheduled_count, 3)
        self.assertEqual([record.rbs for record in trace.ues], [91, 91, 91])
        self.assertEqual(trace.total_rbs_used, 273)

    def test_rb_shares_track_pf_metric(self):
        """
        При равной средней пропускной способности доли RB пропорциональны
        достижимой скорости (PF-метрике) каждого UE.
        """
        cell = self.make_cell(self.profiles[:2])
        for ue in cell.ues:
            ue.buffer_bits = self.settings.full_buffer_bits
        trace = allocate_tti(cell, self.params, self.rng)
        self.assertEqual(trace.scheduled_count, 2)
        self.assertEqual(trace.total_rbs_used, 273)
        weights = [bits_per_rb(record.mcs) * record.rank for record in trace.ues]
        for record, weight in zip(trace.ues, weights):
            expected = 273 * weight / sum(weights)
            self.assertGreaterEqual(record.rbs, int(expected))
            self.assertLessEqual(record.rbs, int(expected) + 1)
        self.assertGreater(trace.ues[0].rbs, trace.ues[1].rbs)

    def test_several_ues_per_slot_under_load(self):
        """
        Три UE с полным буфером: почти в каждом слоте DL запланировано
        больше одного UE, доли RB за сессию близки к трети.
        """
        traces = run_session(
            full_buffer_scenario(), SME_BASELINE, seed=4, duration_s=2.0
        )
        downlink = [trace for trace in traces if trace.slot_kind == SlotKind.DOWNLINK]
        shared = sum(trace.scheduled_count > 1 for trace in downlink)
        self.assertGreaterEqual(shared, 0.9 * len(downlink))
        rbs = np.array(
            [[record.rbs for record in trace.ues] for trace in downlink], dtype=float
        ).sum(axis=0)
        for share in rbs / rbs.sum():
            self.assertAlmostEqual(share, 1 / 3, delta=0.12)

    def test_cce_levels_follow_cqi(self):
        """
        Адаптивный PDCCH выбирает уровень агрегации по CQI, иначе всегда 8.
        """
        cell = self.make_cell(self.profiles)
        for ue in cell.ues:
            ue.buffer_bits = 1000
        trace = allocate_tti(cell, self.params, self.rng)
        self.assertEqual(trace.scheduled_count, 3)
        self.assertEqual(trace.cce_usage, (1, 1, 0, 1))

        cell = self.make_cell(self.profiles)
        for ue in cell.ues:
            ue.buffer_bits = 1000
        trace = allocate_tti(cell, with_params(pdcch_adaptive=False), self.rng)
        self.assertEqual(trace.cce_usage, (0, 0, 3, 0))

    def test_cce_budget_drops_ues(self):
        """
        UE, не поместившиеся в бюджет 48 CCE, выпадают из слота.
        """
        profiles = [UeProfile(i, CoverageClass.POOR, -10.0, 0.0) for i in range(4)]
        cell = self.make_cell(profiles)
        for ue in cell.ues:
            ue.buffer_bits = 100
        trace = allocate_tti(cell, self.params, self.rng)
        self.assertEqual(trace.scheduled_count, 3)
        self.assertEqual(trace.cce_usage, (0, 0, 0, 3))

    def test_retransmission_first(self):
        """
        Повтор HARQ планируется раньше новых данных, с пониженным MCS
        при включённом harq_enhancement.
        """
        cell = self.make_cell(self.profiles[:1])
        ue = cell.ues[0]
        ue.buffer_bits = self.settings.full_buffer_bits
        process = ue.harq_processes[0]
        process.state = HarqState.PENDING_RETX
        process.mcs = 20
        process.tb_bits = 10 * bits_per_rb(20)
        process.payload_bits = process.tb_bits

        params = with_params(harq_enhancement=True)
        trace = allocate_tti(cell, params, self.rng)
        record = trace.ues[0]
        self.assertTrue(record.is_retx)
        self.assertEqual(record.mcs, 19)
        self.assertEqual(record.tb_bits, 10 * bits_per_rb(20))
        self.assertEqual(process.retx_count, 1)

    def test_ack_decrements_buffer_at_feedback(self):
        cell = self.make_cell(self.profiles[:1])
        ue = cell.ues[0]
        ue.buffer_bits = 5000
        trace = allocate_tti(cell, self.params, self.rng)
        self.assertEqual(ue.buffer_bits, 5000)
        self.assertEqual(ue.inflight_bits, 5000)

        cell.slot += self.settings.feedback_delay_slots
        deliver_feedback(cell, self.params)
        if trace.ues[0].outcome == Outcome.ACK:
            self.assertEqual(ue.buffer_bits, 0)
            self.assertEqual(ue.inflight_bits, 0)
        else:
            self.assertEqual(ue.buffer_bits, 5000)
            self.assertEqual(ue.harq_processes[0].state, HarqState.PENDING_RETX)


class TrafficTestCase(SimpleTestCase):
    def setUp(self):
        self.settings = SimulatorSettings()
        self.rng = np.random.default_rng(9)
        profile = UeProfile(0, CoverageClass.MEDIUM, 12.0, 0.0)
        self.ue = UeState.initial(profile, self.settings)

    def test_video_chunk(self):
        """
        Видео 20 Мбит/с: порция раз в 200 слотов размером 2 Мбит x U(0.5, 1.5).
        """
        phase = AppPhase(AppKind.VIDEO_STREAM, 0.0, 1.0, 20e6)
        source = TrafficSource([phase], self.settings)
        source.feed(0, self.ue, self.rng)
        self.assertGreaterEqual(self.ue.buffer_bits, 1_000_000)
        self.assertLessEqual(self.ue.buffer_bits, 3_000_000)
        before = self.ue.buffer_bits
        source.feed(1, self.ue, self.rng)
        self.assertEqual(self.ue.buffer_bits, before)

    def test_full_buffer_flushed_after_phase(self):
        source = TrafficSource(
            [
                AppPhase(AppKind.SPEED_TEST, 0.0, 0.5),
                AppPhase(AppKind.IDLE, 0.5, 0.5),
            ],
            self.settings,
        )
        source.feed(0, self.ue, self.rng)
        self.assertEqual(self.ue.buffer_bits, self.settings.full_buffer_bits)
        self.ue.inflight_bits = 1234
        source.feed(1000, self.ue, self.rng)
        self.assertEqual(self.ue.buffer_bits, 1234)


class ScenarioTestCase(SimpleTestCase):
    """
    Тесты загрузки и валидации сценариев.
    """

    def test_default_scenario(self):
        scenario = load_scenario()
        means = [ue.mean_sinr_db for ue in scenario.ues]
        classes = [ue.coverage_class for ue in scenario.ues]
        self.assertEqual(
            classes, [CoverageClass.EXCELLENT, CoverageClass.MEDIUM, CoverageClass.POOR]
        )
        self.assertGreater(means[0], means[1])
        self.assertGreater(means[1], means[2])

    def test_phases_repeat(self):
        scenario = load_scenario()
        segments = scenario.phase_segments(scenario.ues[0], 25.0)
        starts = [phase.start_s for phase in segments]
        self.assertEqual(starts, [0.0, 4.0, 10.0, 14.0, 20.0, 24.0])

    def test_describe(self):
        meta = load_scenario().describe(10.0)
        self.assertEqual(meta.duration_s, 10.0)
        self.assertAlmostEqual(meta.offered_load_bps[0], 30e6 * 6 / 10)
        self.assertAlmostEqual(meta.full_buffer_fraction, 4.0 / 30.0)

    def test_overlapping_phases_rejected(self):
        data = {
            "name": "bad",
            "ues": [
                {
                    "ue_id": 0,
                    "coverage_class": "medium",
                    "mean_sinr_db": 10,
                    "sinr_stddev_db": 1,
                    "traffic_profile": [
                        {
                            "app_kind": "video_stream",
                            "start_s": 0,
                            "duration_s": 5,
                            "offered_rate_bps": 1e6,
                        },
                        {
                            "app_kind": "messaging",
                            "start_s": 4,
                            "duration_s": 5,
                            "offered_rate_bps": 1e5,
                        },
                    ],
                }
            ],
        }
        serializer = ScenarioSerializer(data=data)
        self.assertTrue(serializer.is_valid(), serializer.errors)
        with self.assertRaises(ValidationError):
            serializer.save()

    def test_unknown_simulator_key_rejected(self):
        data = {
            "name": "bad",
            "simulator": {"warp_drive": 1},
            "ues": [POOR_UE_DOCUMENT],
        }
        serializer = ScenarioSerializer(data=data)
        self.assertFalse(serializer.is_valid())
        self.assertIn("simulator", serializer.errors)

    def scenario_with(self, **simulator):
        return {
            "name": "custom",
            "simulator": simulator,
            "ues": [POOR_UE_DOCUMENT],
        }

    def test_simulator_values_checked(self):
        """
        Константы проверяются по типу и диапазону до запуска сессии.
        """
        bad = {
            "feedback_delay_slots": 0,
            "bler_slope_db": 0,
            "n_rbs": 0,
            "bin_slots": 0,
            "cqi_db_per_step": -1.0,
            "cce_budget": 0,
            "olla_step_down_db": 0,
            "p_dtx": 1.5,
            "ar_coeff": 1.0,
            "max_retx": -1,
            "tdd_pattern": "UUU",
        }
        for name, value in bad.items():
            with self.subTest(name=name, value=value):
                data = self.scenario_with(**{name: value})
                serializer = ScenarioSerializer(data=data)
                self.assertFalse(serializer.is_valid())
                self.assertIn(name, serializer.errors["simulator"])

    def test_non_numeric_string_rejected(self):
        serializer = ScenarioSerializer(data=self.scenario_with(n_rbs="abc"))
        self.assertFalse(serializer.is_valid())
        self.assertIn("n_rbs", serializer.errors["simulator"])

    def test_numeric_string_coerced(self):
        serializer = ScenarioSerializer(data=self.scenario_with(n_rbs="100"))
        self.assertTrue(serializer.is_valid(), serializer.errors)
        scenario = serializer.save()
        self.assertEqual(scenario.settings.n_rbs, 100)
        self.assertEqual(scenario.settings.cce_budget, 48)

    def test_settings_guarded_without_serializer(self):
        for overrides in (
            {"bler_slope_db": 0.0},
            {"feedback_delay_slots": 0},
            {"n_rbs": "273"},
            {"max_retx": -1},
        ):
            with self.subTest(**overrides):
                with self.assertRaises(ScenarioError):
                    SimulatorSettings(**overrides)

    def test_missing_file(self):
        with self.assertRaises(ScenarioError):
            load_scenario("/nonexistent/scenario.json")

    def test_bad_tdd_pattern(self):
        with self.assertRaises(ScenarioError):
            SimulatorSettings(tdd_pattern="UUUU")


class SessionTestCase(SimpleTestCase):
    """
    Тесты полной сессии: число слотов, детерминизм, инварианты трассы.
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.scenario = load_scenario()
        cls.traces = run_session(cls.scenario, SME_BASELINE, seed=42, duration_s=1.0)

    def test_slot_count(self):
        """
        1 с -> 2000 слотов, из них ровно 1600 DL.
        """
        self.assertEqual(len(self.traces), 2000)
        downlink = [
            trace for trace in self.traces if trace.slot_kind == SlotKind.DOWNLINK
        ]
        self.assertEqual(len(downlink), 1600)
        indices = [trace.tti_index for trace in self.traces]
        self.assertEqual(indices, list(range(2000)))

    def test_non_positive_duration(self):
        with self.assertRaises(ScenarioError):
            run_session(self.scenario, SME_BASELINE, seed=1, duration_s=0)

    def test_determinism(self):
        again = run_session(self.scenario, SME_BASELINE, seed=42, duration_s=1.0)
        self.assertEqual(again, self.traces)
        other = run_session(self.scenario, SME_BASELINE, seed=43, duration_s=1.0)
        self.assertNotEqual(other, self.traces)

    def test_trace_csv_identical(self):
        again = run_session(self.scenario, SME_BASELINE, seed=42, duration_s=1.0)
        with tempfile.TemporaryDirectory() as directory:
            first = Path(directory) / "first.csv"
            second = Path(directory) / "second.csv"
            write_trace_csv(self.traces, first)
            write_trace_csv(again, second)
            self.assertEqual(first.read_bytes(), second.read_bytes())
            header = first.read_text(encoding="utf-8").splitlines()[0]
            self.assertEqual(header, ",".join(trace_header(3)))

    def assert_conserved(self, traces, n_rbs=273):
        scheduled = outcomes = 0
        for trace in traces:
            self.assertLessEqual(trace.total_rbs_used, n_rbs)
            self.assertEqual(
                trace.total_rbs_used, sum(record.rbs for record in trace.ues)
            )
            for record in trace.ues:
                scheduled += record.scheduled
                outcomes += record.outcome in (Outcome.ACK, Outcome.NACK, Outcome.DTX)
                self.assertEqual(
                    record.scheduled, record.outcome != Outcome.NOT_SCHEDULED
                )
                self.assertGreaterEqual(record.buffer_bits, 0)
                self.assertTrue(0.0 <= record.cqi <= 15.0)
            if trace.slot_kind == SlotKind.OTHER:
                self.assertEqual(trace.scheduled_count, 0)
                self.assertIn(trace.ul_outcome, (Outcome.ACK, Outcome.NACK))
        self.assertEqual(scheduled, outcomes)
        return scheduled

    def test_conservation(self):
        """
        ACK + NACK + DTX = число запланированных TB; исход есть только у назначений.
        """
        self.assertGreater(self.assert_conserved(self.traces), 0)

    def test_conservation_random_sessions(self):
        """
        100 случайных сочетаний (сценарий, параметры, seed): исходы сходятся
        с числом TB, пропускная способность RLC не выше MAC.
        """
        rng = np.random.default_rng(2024)
        for case in range(100):
            scenario = random_scenario(rng)
            params = sample_candidate(SamplingMode.UNIFORM_RANDOM, DEFAULT_SPECS, rng)
            seed = int(rng.integers(2**32))
            with self.subTest(case=case, seed=seed):
                traces = run_session(scenario, params, seed=seed, duration_s=1.0)
                self.assert_conserved(traces)
                kpis = summarize(aggregate(traces))
                self.assertLessEqual(
                    kpis.dl_rlc_throughput_bps, kpis.dl_mac_throughput_bps
                )

    def test_capacity_bound(self):
        ceiling = 273 * bits_per_rb(27) * 8
        for trace in self.traces:
            for record in trace.ues:
                rank_ceiling = 273 * bits_per_rb(27) * record.rank
                self.assertLessEqual(record.tb_bits, rank_ceiling)
                self.assertLessEqual(record.tb_bits, ceiling)

    def test_higher_ibler_raises_mcs(self):
        """
        При IBLER 0.5 средний MCS и доля NACK первичных передач выше, чем при 0.1.
        """
        seeds = range(20) if RUN_SLOW_TESTS else range(3)
        stats = {}
        for target in (0.1, 0.5):
            params = with_params(ibler_target=target)
            mcs_values = []
            initial = nacks = 0
            for seed in seeds:
                traces = run_session(self.scenario, params, seed=seed, duration_s=1.0)
                for trace in traces:
                    for record in trace.ues:
                        if record.scheduled and not record.is_retx:
                            mcs_values.append(record.mcs)
                            initial += 1
                            nacks += record.outcome == Outcome.NACK
            stats[target] = (np.mean(mcs_values), nacks / initial)
        self.assertGreater(stats[0.5][0], stats[0.1][0])
        self.assertGreater(stats[0.5][1], stats[0.1][1])

    @skipUnless(RUN_SLOW_TESTS, "долгий тест: RUN_SLOW_TESTS=1")
    def test_pf_fairness(self):
        """
        Три UE с полным буфером при fairness_exponent = 1 делят слоты
        примерно поровну.
        """
        traces = run_session(
            full_buffer_scenario(), SME_BASELINE, seed=3, duration_s=62.5
        )
        counts = np.zeros(3)
        delivered = np.zeros(3)
        for trace in traces:
            for index, record in enumerate(trace.ues):
                counts[index] += record.scheduled
                if record.outcome == Outcome.ACK:
                    delivered[index] += record.tb_bits
        shares = counts / counts.sum()
        for share in shares:
            self.assertAlmostEqual(share, 1 / 3, delta=0.2 / 3)
        self.assertGreater(delivered[0], delivered[1])
        self.assertGreater(delivered[1], delivered[2])


class ScenarioSettingsTestCase(SimpleTestCase):
    def test_dl_slots(self):
        self.assertEqual(SimulatorSettings().dl_slots_per_second, 1600)
        alternating = replace(SimulatorSettings(), tdd_pattern="DU")
        self.assertEqual(alternating.dl_slots_per_second, 1000)
