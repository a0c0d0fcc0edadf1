import json
import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from actions.space import SME_BASELINE
from scheduler.scenario import SessionMeta, load_scenario
from scheduler.session import run_session
from scheduler.trace import Outcome, SlotKind, TtiTrace, UeRecord

from .aggregation import CELL_SERIES, UE_SERIES, AggregatedBin, aggregate
from .constraints import check_constraints, load_counts
from .export import bin_header, write_bins_csv, write_kpi_csv
from .features import FEATURE_LENGTH, FEATURE_SCHEMA, STATISTICS, features
from .objective import (DEFAULT_OBJECTIVE, Direction, MissingKpiError,
                        ObjectiveConfig, ObjectiveConfigError, ObjectiveEntry,
                        normalize_kpi, normalized_kpis, objective_from_preset,
                        reward)
from .serializers import ObjectiveConfigSerializer
from .summary import KpiVector, SessionTooShortError, cell_edge_ue, summarize

META = SessionMeta(
    duration_s=1.0,
    offered_load_bps=(0.0, 0.0, 0.0),
    full_buffer_fraction=0.0,
    coverage_classes=("excellent", "medium", "poor"),
)


def idle_record(cqi=5.0):
    return UeRecord(
        scheduled=False,
        mcs=0,
        rbs=0,
        tb_bits=0,
        outcome=Outcome.NOT_SCHEDULED,
        is_retx=False,
        cqi=cqi,
        rank=1,
        buffer_bits=0,
    )


def scheduled_record(outcome, tb_bits=1000, mcs=10, is_retx=False):
    return UeRecord(
        scheduled=True,
        mcs=mcs,
        rbs=4,
        tb_bits=tb_bits,
        outcome=outcome,
        is_retx=is_retx,
        cqi=9.0,
        rank=1,
        buffer_bits=5000,
    )


def idle_trace(index, ue_count=3):
    downlink = index % 5 != 4
    return TtiTrace(
        tti_index=index,
        slot_kind=SlotKind.DOWNLINK if downlink else SlotKind.OTHER,
        ues=tuple(idle_record() for _ in range(ue_count)),
        ul_outcome=None if downlink else Outcome.ACK,
    )


def make_bin(index=0, ue_values=None, **cell):
    values = dict.fromkeys(CELL_SERIES, 0.0)
    values.update(cell)
    ues = tuple(
        {**dict.fromkeys(UE_SERIES, 0.0), **(ue_values or {})} for _ in range(3)
    )
    return AggregatedBin(bin_index=index, cell=values, ues=ues)


class AggregationTestCase(SimpleTestCase):
    """
    Тесты агрегации трассы в бины по 2000 слотов.
    """

    def test_bin_count(self):
        traces = [idle_trace(index) for index in range(60_000)]
        bins = aggregate(traces)
        self.assertEqual(len(bins), 30)
        self.assertEqual([b.bin_index for b in bins], list(range(30)))

    def test_partial_bin_discarded(self):
        self.assertEqual(aggregate([idle_trace(index) for index in range(1999)]), [])
        bins = aggregate([idle_trace(index) for index in range(3999)])
        self.assertEqual(len(bins), 1)

    def test_idle_session(self):
        """
        Пустая сота: счётчики пропускной способности нулевые, доли равны 0.
        """
        bins = aggregate([idle_trace(index) for index in range(4000)])
        for b in bins:
            self.assertEqual(b["dl_mac_bits"], 0.0)
            self.assertEqual(b["dl_rlc_bits"], 0.0)
            self.assertEqual(b["scheduled_dl_ttis"], 0.0)
            self.assertEqual(b["rb_utilization"], 0.0)
            self.assertEqual(b["dl_slots"], 1600.0)
            self.assertEqual(b["ul_ack_count"], 400.0)
            for ue in b.ues:
                self.assertEqual(ue["ack_ratio"], 0.0)
        self.assertEqual(summarize(bins), KpiVector())

    def test_hand_built_counts(self):
        """
        Три ACK и один NACK в бине -> dl_ack_count = 3, dl_nack_count = 1.
        """
        traces = [idle_trace(index) for index in range(2000)]
        outcomes = [Outcome.ACK, Outcome.ACK, Outcome.NACK, Outcome.ACK]
        for slot, outcome in zip((0, 1, 2, 3), outcomes):
            traces[slot] = TtiTrace(
                tti_index=slot,
                slot_kind=SlotKind.DOWNLINK,
                ues=(scheduled_record(outcome), idle_record(), idle_record()),
                cce_usage=(0, 1, 0, 0),
                total_rbs_used=4,
            )
        traces[5] = TtiTrace(
            tti_index=5,
            slot_kind=SlotKind.DOWNLINK,
            ues=(
                idle_record(),
                scheduled_record(Outcome.DTX, tb_bits=500, is_retx=True),
                idle_record(),
            ),
            cce_usage=(0, 0, 1, 0),
            total_rbs_used=4,
        )
        (b,) = aggregate(traces)
        self.assertEqual(b["dl_ack_count"], 3.0)
        self.assertEqual(b["dl_nack_count"], 1.0)
        self.assertEqual(b["dl_dtx_count"], 1.0)
        self.assertEqual(b["dl_mac_bits"], 4500.0)
        self.assertEqual(b["dl_rlc_bits"], 4000.0)
        self.assertAlmostEqual(b["dl_pdcp_bits"], 4000.0 * 0.98)
        self.assertEqual(b["retx_count"], 1.0)
        self.assertEqual(b["scheduled_dl_ttis"], 5.0)
        self.assertEqual(b["cce_4"], 4.0)
        self.assertEqual(b["cce_8"], 1.0)
        self.assertEqual(b["cce_used"], 24.0)
        self.assertEqual(b["rb_used"], 20.0)
        self.assertEqual(b["initial_error_count"], 1.0)
        self.assertEqual(b.ues[0]["ack_ratio"], 0.75)
        self.assertEqual(b.ues[1]["dtx_ratio"], 1.0)
        self.assertEqual(b.ues[0]["rb_share"], 0.8)


class SessionAggregationTestCase(SimpleTestCase):
    """
    Счётчики бинов совпадают с пересчётом по слотам реальной сессии.
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.scenario = load_scenario()
        cls.traces = run_session(cls.scenario, SME_BASELINE, seed=1, duration_s=2.0)
        cls.bins = aggregate(cls.traces)

    def test_recount(self):
        self.assertEqual(len(self.bins), 2)
        for b in self.bins:
            slots = self.traces[b.bin_index * 2000 : (b.bin_index + 1) * 2000]
            records = [
                record for trace in slots for record in trace.ues if record.scheduled
            ]
            acks = sum(record.outcome == Outcome.ACK for record in records)
            self.assertEqual(b["dl_tb_count"], len(records))
            self.assertEqual(b["dl_ack_count"], acks)
            mac_bits = sum(record.tb_bits for record in records)
            self.assertEqual(b["dl_mac_bits"], mac_bits)
            self.assertEqual(
                b["cce_2"] + b["cce_4"] + b["cce_8"] + b["cce_16"], len(records)
            )
            self.assertLessEqual(b["dl_rlc_bits"], b["dl_mac_bits"])
            for ratio in ("rb_utilization", "cce_utilization"):
                self.assertTrue(0.0 <= b[ratio] <= 1.0)

    def test_summary_ordering(self):
        kpis = summarize(self.bins)
        self.assertLessEqual(kpis.dl_rlc_throughput_bps, kpis.dl_mac_throughput_bps)
        self.assertLessEqual(kpis.dl_pdcp_throughput_bps, kpis.dl_rlc_throughput_bps)
        outcomes = kpis.dl_ack_ratio + kpis.dl_nack_ratio + kpis.dl_dtx_ratio
        self.assertAlmostEqual(outcomes, 1.0)
        self.assertTrue(0.0 <= kpis.ul_ack_ratio <= 1.0)
        self.assertTrue(0.0 <= kpis.dl_mean_mcs <= 27.0)

    def test_session_features(self):
        vector = features(self.bins, self.scenario.describe(2.0))
        self.assertEqual(len(vector), FEATURE_LENGTH)
        self.assertTrue(np.all(np.isfinite(vector.values)))
        self.assertTrue(np.all((vector.values >= 0.0) & (vector.values <= 1.0)))
        again = features(aggregate(self.traces), self.scenario.describe(2.0))
        np.testing.assert_array_equal(vector.values, again.values)


class FeatureTestCase(SimpleTestCase):
    """
    Тесты вектора признаков фиксированной схемы.
    """

    def test_schema_length(self):
        self.assertEqual(FEATURE_LENGTH, 312)
        self.assertEqual(len(set(FEATURE_SCHEMA.names)), 312)
        self.assertTrue(np.all(FEATURE_SCHEMA.lower < FEATURE_SCHEMA.upper))

    def test_zero_bins(self):
        with self.assertRaises(SessionTooShortError):
            features([], META)

    def test_single_bin_statistics(self):
        """
        Один бин: СКО нулевые, min = max = mean = p90.
        """
        b = make_bin(dl_mac_bits=5e8, mean_mcs=12.0, ue_values={"mean_cqi": 7.0})
        raw = features([b], META).raw
        cell = raw[: len(CELL_SERIES) * 5].reshape(len(CELL_SERIES), 5)
        np.testing.assert_array_equal(cell[:, 1], 0.0)
        np.testing.assert_array_equal(cell[:, 0], cell[:, 2])
        np.testing.assert_array_equal(cell[:, 0], cell[:, 3])
        np.testing.assert_array_equal(cell[:, 0], cell[:, 4])
        self.assertEqual(cell[CELL_SERIES.index("dl_mac_bits"), 0], 5e8)

    def test_identical_bins(self):
        """
        Два одинаковых бина дают тот же вектор, кроме числа бинов.
        """
        b = make_bin(scheduled_dl_ttis=1500.0, dl_mac_bits=1e8)
        single = features([b], META)
        second = make_bin(1, scheduled_dl_ttis=1500.0, dl_mac_bits=1e8)
        double = features([b, second], META)
        bin_count = FEATURE_SCHEMA.names.index("session.bin_count")
        mask = np.ones(FEATURE_LENGTH, dtype=bool)
        mask[bin_count] = False
        np.testing.assert_array_equal(single.values[mask], double.values[mask])
        self.assertNotEqual(single.raw[bin_count], double.raw[bin_count])

    def test_p90_matches_sorted_oracle(self):
        rng = np.random.default_rng(4)
        bins = [
            make_bin(
                index, **{name: float(rng.uniform(0, 1000)) for name in CELL_SERIES}
            )
            for index in range(17)
        ]
        raw = features(bins, META).raw
        for position, name in enumerate(CELL_SERIES):
            ordered = sorted(b[name] for b in bins)
            rank = 0.9 * (len(ordered) - 1)
            low = math.floor(rank)
            expected = ordered[low] + (rank - low) * (ordered[low + 1] - ordered[low])
            p90 = raw[position * len(STATISTICS) + STATISTICS.index("p90")]
            self.assertAlmostEqual(p90, expected, places=9)

    def test_out_of_bound_values_clamped(self):
        vector = features([make_bin(dl_mac_bits=1e12, mean_mcs=-3.0)], META)
        self.assertEqual(vector.values[CELL_SERIES.index("dl_mac_bits") * 5], 1.0)
        self.assertEqual(vector.values[CELL_SERIES.index("mean_mcs") * 5], 0.0)

    def test_schema_export(self):
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / "schema.json"
            FEATURE_SCHEMA.export(path)
            document = json.loads(path.read_text(encoding="utf-8"))
        self.assertEqual(document["length"], 312)
        self.assertEqual(document["features"][0]["name"], "cell.dl_mac_bits.mean")


class SummaryTestCase(SimpleTestCase):
    """
    Тесты сводки KPI сессии.
    """

    def test_zero_bins(self):
        with self.assertRaises(SessionTooShortError):
            summarize([])

    def test_throughput_units(self):
        """
        1e6 бит за бин из 2000 слотов (1 с) -> 1e6 бит/с.
        """
        b = make_bin(
            dl_mac_bits=1e6, dl_rlc_bits=1e6, dl_tb_count=10.0, dl_ack_count=10.0
        )
        kpis = summarize([b])
        self.assertEqual(kpis.dl_mac_throughput_bps, 1e6)
        self.assertEqual(kpis.dl_ack_ratio, 1.0)

    def test_mixed_counts(self):
        bins = [
            make_bin(
                0,
                dl_tb_count=10.0,
                dl_ack_count=6.0,
                dl_nack_count=3.0,
                dl_dtx_count=1.0,
                mean_mcs=10.0,
                ul_ack_count=380.0,
                ul_nack_count=20.0,
                cce_2=4.0,
                cce_8=6.0,
            ),
            make_bin(
                1,
                dl_tb_count=30.0,
                dl_ack_count=30.0,
                mean_mcs=20.0,
                ul_ack_count=390.0,
                ul_nack_count=10.0,
                cce_2=10.0,
            ),
        ]
        kpis = summarize(bins)
        self.assertAlmostEqual(kpis.dl_ack_ratio, 36 / 40)
        self.assertAlmostEqual(kpis.dl_nack_ratio, 3 / 40)
        self.assertAlmostEqual(kpis.dl_dtx_ratio, 1 / 40)
        self.assertAlmostEqual(kpis.ul_ack_ratio, 770 / 800)
        self.assertAlmostEqual(kpis.dl_mean_mcs, (10 * 10 + 20 * 30) / 40)
        self.assertAlmostEqual(kpis.cce2_utilization, 14 / 20)

    def test_cell_edge_is_lowest_cqi(self):
        b = make_bin(dl_tb_count=1.0)
        ues = (
            {**b.ues[0], "mean_cqi": 14.0, "mac_bits": 9e6},
            {**b.ues[1], "mean_cqi": 9.0, "mac_bits": 5e6},
            {**b.ues[2], "mean_cqi": 3.0, "mac_bits": 1e6},
        )
        kpis = summarize([AggregatedBin(0, b.cell, ues)])
        self.assertEqual(kpis.cell_edge_throughput_bps, 1e6)

    def test_cell_edge_is_poor_class(self):
        """
        UE края соты выбирается по классу покрытия Poor, даже если его CQI
        не самый низкий.
        """
        b = make_bin(dl_tb_count=1.0)
        ues = (
            {**b.ues[0], "mean_cqi": 14.0, "mac_bits": 9e6},
            {**b.ues[1], "mean_cqi": 9.0, "mac_bits": 5e6},
            {**b.ues[2], "mean_cqi": 3.0, "mac_bits": 1e6},
        )
        bins = [AggregatedBin(0, b.cell, ues)]
        classes = ("excellent", "poor", "medium")
        kpis = summarize(bins, coverage_classes=classes)
        self.assertEqual(kpis.cell_edge_throughput_bps, 5e6)
        self.assertEqual(cell_edge_ue(bins, classes), 1)
        self.assertEqual(cell_edge_ue(bins, ("excellent", "medium", "medium")), 2)


class ConstraintTestCase(SimpleTestCase):
    """
    Тесты ограничений валидности сессии (секунды высокой и средней загрузки).
    """

    def bins(self, *loads):
        return [
            make_bin(index, scheduled_dl_ttis=float(load))
            for index, load in enumerate(loads)
        ]

    def test_high_load(self):
        self.assertTrue(check_constraints(self.bins(*[1500] * 10), 5, 0))

    def test_low_load(self):
        self.assertFalse(check_constraints(self.bins(*[100] * 10), 1, 0))
        self.assertFalse(check_constraints(self.bins(*[100] * 10), 0, 1))

    def test_vacuous(self):
        self.assertTrue(check_constraints(self.bins(*[0] * 3), 0, 0))
        self.assertTrue(check_constraints([], 0, 0))

    def test_band_boundaries(self):
        """
        Средняя полоса замкнута: [320, 1280]; 1281 - высокая, 319 - низкая.
        """
        counts = load_counts(self.bins(1279, 1280, 1281, 319, 320, 321, 0))
        self.assertEqual(
            (counts.high, counts.mid, counts.low, counts.idle), (1, 4, 1, 1)
        )
        self.assertTrue(check_constraints(self.bins(1281), 1, 0))
        self.assertFalse(check_constraints(self.bins(1280), 1, 0))
        self.assertTrue(check_constraints(self.bins(320), 0, 1))
        self.assertFalse(check_constraints(self.bins(319), 0, 1))

    def test_monotone(self):
        bins = self.bins(1500, 1500, 800)
        self.assertTrue(check_constraints(bins, 2, 1))
        self.assertTrue(check_constraints(bins + self.bins(1500), 2, 1))

    def test_negative_rejected(self):
        with self.assertRaises(ValueError):
            check_constraints([], -1, 0)


class ObjectiveTestCase(SimpleTestCase):
    """
    Тесты нормировки KPI и взвешенной награды.
    """

    def test_normalize(self):
        entry = ObjectiveEntry("dl_ack_ratio", 100, 0.2, 0.8)
        self.assertEqual(normalize_kpi(0.2, entry), 0.0)
        self.assertEqual(normalize_kpi(0.9, entry), 1.0)
        self.assertAlmostEqual(normalize_kpi(0.5, entry), 0.5)
        inverted = ObjectiveEntry("dl_nack_ratio", 100, 0.0, 1.0, Direction.MINIMIZE)
        self.assertEqual(normalize_kpi(1.0, inverted), 0.0)

    def test_default_weights(self):
        weights = {entry.kpi_name: entry.weight for entry in DEFAULT_OBJECTIVE.entries}
        self.assertEqual(
            weights,
            {
                "dl_mac_throughput_bps": 0.22,
                "dl_rlc_throughput_bps": 0.29,
                "dl_ack_ratio": 0.28,
                "ul_ack_ratio": 0.15,
                "dl_mean_mcs": 0.06,
                "cce2_utilization": 0.0,
            },
        )

    def test_reward_bounds(self):
        best = KpiVector(
            dl_mac_throughput_bps=2e9,
            dl_rlc_throughput_bps=2e9,
            dl_ack_ratio=1.0,
            ul_ack_ratio=1.0,
            dl_mean_mcs=27.0,
            cce2_utilization=1.0,
        )
        self.assertEqual(reward(best, DEFAULT_OBJECTIVE), 1.0)
        self.assertEqual(reward(KpiVector(), DEFAULT_OBJECTIVE), 0.0)
        saturated = KpiVector(dl_mac_throughput_bps=1.2e9)
        self.assertEqual(reward(saturated, DEFAULT_OBJECTIVE), 0.22)

    def test_reward_is_dot_product(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            kpis = KpiVector(
                dl_mac_throughput_bps=float(rng.uniform(0, 1.5e9)),
                dl_rlc_throughput_bps=float(rng.uniform(0, 1.5e9)),
                dl_ack_ratio=float(rng.uniform()),
                ul_ack_ratio=float(rng.uniform()),
                dl_mean_mcs=float(rng.uniform(0, 27)),
            )
            normalized = normalized_kpis(kpis, DEFAULT_OBJECTIVE)
            weights = [entry.weight for entry in DEFAULT_OBJECTIVE.entries]
            value = reward(kpis, DEFAULT_OBJECTIVE)
            self.assertAlmostEqual(value, float(np.dot(weights, normalized)), places=12)
            self.assertTrue(0.0 <= value <= 1.0)

    def test_monotone(self):
        low = reward(KpiVector(dl_ack_ratio=0.5), DEFAULT_OBJECTIVE)
        high = reward(KpiVector(dl_ack_ratio=0.6), DEFAULT_OBJECTIVE)
        self.assertGreater(high, low)

    def test_missing_kpi(self):
        with self.assertRaises(MissingKpiError):
            reward({"dl_ack_ratio": 1.0}, DEFAULT_OBJECTIVE)

    def test_weights_must_sum_to_one(self):
        with self.assertRaises(ObjectiveConfigError):
            ObjectiveConfig(entries=(ObjectiveEntry("dl_ack_ratio", 99, 0.0, 1.0),))
        with self.assertRaises(ObjectiveConfigError):
            ObjectiveEntry("dl_ack_ratio", 100, 1.0, 1.0)

    def test_preset(self):
        """
        Пресет (ёмкость 51, покрытие 0, качество 49) воспроизводит веса по умолчанию.
        """
        preset = objective_from_preset(51, 0, 49)
        weights = {entry.kpi_name: entry.weight_hundredths for entry in preset.entries}
        for entry in DEFAULT_OBJECTIVE.entries:
            self.assertEqual(weights[entry.kpi_name], entry.weight_hundredths)
        self.assertEqual(weights["cell_edge_throughput_bps"], 0)
        coverage = objective_from_preset(20, 50, 30)
        total = sum(entry.weight_hundredths for entry in coverage.entries)
        self.assertEqual(total, 100)
        with self.assertRaises(ObjectiveConfigError):
            objective_from_preset(50, 50, 50)


class ObjectiveSerializerTestCase(SimpleTestCase):
    def entry(self, name, weight):
        return {"kpi_name": name, "weight": weight, "normalization": {"lo": 0, "hi": 1}}

    def entries(self, *pairs):
        return {"entries": [self.entry(name, weight) for name, weight in pairs]}

    def test_entries(self):
        serializer = ObjectiveConfigSerializer(
            data=self.entries(("dl_ack_ratio", 0.7), ("ul_ack_ratio", 0.3))
        )
        self.assertTrue(serializer.is_valid(), serializer.errors)
        config = serializer.save()
        weights = [entry.weight_hundredths for entry in config.entries]
        self.assertEqual(weights, [70, 30])

    def test_weights_not_summing(self):
        serializer = ObjectiveConfigSerializer(
            data=self.entries(("dl_ack_ratio", 0.7), ("ul_ack_ratio", 0.2))
        )
        self.assertFalse(serializer.is_valid())

    def test_weight_precision(self):
        data = self.entries(("dl_ack_ratio", 0.995))
        serializer = ObjectiveConfigSerializer(data=data)
        self.assertFalse(serializer.is_valid())

    def test_preset(self):
        serializer = ObjectiveConfigSerializer(
            data={"preset": {"capacity": 51, "coverage": 0, "quality": 49}}
        )
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(reward(KpiVector(), serializer.save()), 0.0)

    def test_entries_or_preset(self):
        self.assertFalse(ObjectiveConfigSerializer(data={}).is_valid())


class ExportTestCase(SimpleTestCase):
    def test_bins_and_kpi_csv(self):
        bins = [make_bin(0, dl_mac_bits=10.0), make_bin(1)]
        with tempfile.TemporaryDirectory() as directory:
            bins_path = Path(directory) / "bins.csv"
            kpi_path = Path(directory) / "kpi.csv"
            write_bins_csv(bins, bins_path)
            write_kpi_csv([((0,), KpiVector(dl_ack_ratio=0.5))], kpi_path)
            lines = bins_path.read_text(encoding="utf-8").splitlines()
            self.assertEqual(lines[0].split(","), bin_header(3))
            self.assertEqual(len(lines), 3)
            kpi_lines = kpi_path.read_text(encoding="utf-8").splitlines()
            self.assertTrue(kpi_lines[0].startswith("session,dl_mac_throughput_bps"))
