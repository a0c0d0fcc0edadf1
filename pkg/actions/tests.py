from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase
from rest_framework import serializers

from .serializers import ParameterSetSerializer, RecommendedRangesField
from .space import (CORE_SPECS, DEFAULT_SPECS, PARAMETER_NAMES, SME_BASELINE,
                    SPECS_BY_NAME, DegenerateIblerError, OffGridError,
                    OutOfRangeError, ParameterKind, ParameterSet,
                    ParameterSpec, SamplingMode, cardinality, decode_action,
                    encode_action, sample_candidate, validate,
                    with_recommended_ranges)


def minimum_values():
    return {spec.name: spec.value_of(0) for spec in DEFAULT_SPECS}


class ParameterSpecTestCase(SimpleTestCase):
    """
    Сетки параметров и проверка описаний.
    """

    def test_grid_sizes(self):
        counts = {spec.name: spec.count for spec in DEFAULT_SPECS}
        self.assertEqual(counts["ibler_target"], 101)
        self.assertEqual(counts["mcs_filter"], 201)
        self.assertEqual(counts["initial_rank"], 8)
        self.assertEqual(counts["cqi_filter_coeff"], 21)
        self.assertEqual(counts["fairness_exponent"], 21)
        self.assertEqual(counts["max_mcs_cap"], 28)
        self.assertEqual(counts["pmi_enhancement"], 2)

    def test_values_without_drift(self):
        spec = SPECS_BY_NAME["ibler_target"]
        self.assertEqual(spec.value_of(10), 0.1)
        self.assertEqual(spec.value_of(7), 0.07)
        self.assertEqual(spec.index_of(0.07), 7)

    def test_invalid_specs(self):
        with self.assertRaises(ValueError):
            ParameterSpec("x", "x", ParameterKind.QUANTIZED_REAL, 1.0, 0.0, 0.1)
        with self.assertRaises(ValueError):
            ParameterSpec("x", "x", ParameterKind.QUANTIZED_REAL, 0.0, 1.0, 0.0)
        with self.assertRaises(ValueError):
            ParameterSpec("x", "x", ParameterKind.QUANTIZED_REAL, 0.0, 1.0, 0.3)


class ValidateTestCase(SimpleTestCase):
    def test_all_minimum_is_valid(self):
        ps = validate(minimum_values())
        self.assertEqual(ps.initial_rank, 1)
        self.assertEqual(ps.ibler_target, 0.0)
        self.assertFalse(ps.harq_enhancement)

    def test_degenerate_ibler(self):
        values = minimum_values() | {"ibler_target": 1.0}
        with self.assertRaises(DegenerateIblerError) as ctx:
            validate(values)
        self.assertEqual(ctx.exception.field, "ibler_target")

    def test_off_grid(self):
        values = minimum_values() | {"mcs_filter": 0.005}
        with self.assertRaises(OffGridError) as ctx:
            validate(values)
        self.assertEqual(ctx.exception.field, "mcs_filter")

    def test_out_of_range(self):
        with self.assertRaises(OutOfRangeError):
            validate(minimum_values() | {"initial_rank": 9})
        with self.assertRaises(OutOfRangeError):
            validate({"ibler_target": 0.1})

    def test_parameter_set_returned_unchanged(self):
        self.assertIs(validate(SME_BASELINE), SME_BASELINE)

    def test_bad_index_rejected(self):
        broken = replace(SME_BASELINE, mcs_filter_index=500)
        with self.assertRaises(OutOfRangeError):
            validate(broken)

    def test_json_key_order(self):
        self.assertEqual(list(SME_BASELINE.as_dict()), list(PARAMETER_NAMES))
        self.assertIn('"ibler_target":0.1', SME_BASELINE.to_json())


class CardinalityTestCase(SimpleTestCase):
    def test_core_parameters(self):
        self.assertEqual(cardinality(CORE_SPECS), 1_299_264)
        self.assertGreater(cardinality(CORE_SPECS), 600_000)

    def test_trivial(self):
        self.assertEqual(cardinality([SPECS_BY_NAME["pmi_enhancement"]]), 2)
        self.assertEqual(cardinality([]), 1)

    def test_extension_is_monotone(self):
        self.assertGreaterEqual(cardinality(DEFAULT_SPECS), cardinality(CORE_SPECS))


class DecodeTestCase(SimpleTestCase):
    """
    Отображение выхода MLP на сетки параметров.
    """

    def test_lower_saturation(self):
        ps = decode_action(np.full(10, -1.0))
        self.assertEqual(ps, validate(minimum_values()))

    def test_upper_saturation(self):
        ps = decode_action(np.ones(10))
        values = ps.as_dict()
        self.assertEqual(values["ibler_target"], 0.99)
        self.assertEqual(values["mcs_filter"], 2.0)
        self.assertEqual(values["initial_rank"], 8)
        self.assertEqual(values["max_mcs_cap"], 27)
        self.assertTrue(values["pdcch_adaptive"])
        validate(ps)

    def test_midpoint_rounds_half_up(self):
        raw = np.full(10, -1.0)
        raw[PARAMETER_NAMES.index("initial_rank")] = 0.0
        self.assertEqual(decode_action(raw).initial_rank, 5)

    def test_boolean_tie_is_false(self):
        ps = decode_action(np.zeros(10))
        self.assertFalse(ps.adaptive_mcs_selection)
        self.assertFalse(ps.pmi_enhancement)

    def test_contract_violation(self):
        with self.assertRaises(ValueError):
            decode_action(np.full(10, 1.5))
        with self.assertRaises(ValueError):
            decode_action(np.zeros(9))
        with self.assertRaises(ValueError):
            decode_action(np.full(10, np.nan))

    def test_grid_points_survive_reencode(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            ps = sample_candidate(SamplingMode.UNIFORM_RANDOM, DEFAULT_SPECS, rng)
            self.assertEqual(decode_action(encode_action(ps)), ps)

    def test_random_raw_is_valid(self):
        rng = np.random.default_rng(12)
        for raw in rng.uniform(-1.0, 1.0, size=(200, 10)):
            validate(decode_action(raw))


class SampleCandidateTestCase(SimpleTestCase):
    def test_uniform_boolean_fraction(self):
        rng = np.random.default_rng(0)
        mode = SamplingMode.UNIFORM_RANDOM
        draws = [
            sample_candidate(mode, DEFAULT_SPECS, rng).pmi_enhancement
            for _ in range(20_000)
        ]
        self.assertAlmostEqual(np.mean(draws), 0.5, delta=0.015)

    def test_uniform_never_hits_guard(self):
        rng = np.random.default_rng(1)
        for _ in range(2000):
            ps = sample_candidate(SamplingMode.UNIFORM_RANDOM, DEFAULT_SPECS, rng)
            self.assertLess(ps.ibler_target, 1.0)

    def test_manual_range_containment(self):
        specs = with_recommended_ranges(DEFAULT_SPECS, {"ibler_target": (0.08, 0.12)})
        rng = np.random.default_rng(2)
        seen = set()
        for _ in range(500):
            ps = sample_candidate(SamplingMode.MANUAL_RANGE, specs, rng)
            self.assertIn(ps.ibler_target_index, range(8, 13))
            self.assertIn(ps.initial_rank, (2, 3, 4))
            seen.add(ps.ibler_target_index)
        self.assertEqual(seen, set(range(8, 13)))

    def test_degenerate_range(self):
        specs = with_recommended_ranges(DEFAULT_SPECS, {"mcs_filter": (0.4, 0.4)})
        rng = np.random.default_rng(3)
        for _ in range(50):
            ps = sample_candidate(SamplingMode.MANUAL_RANGE, specs, rng)
            self.assertEqual(ps.mcs_filter, 0.4)

    def test_missing_range(self):
        specs = tuple(
            replace(spec, sme_recommended_range=None)
            if spec.name == "mcs_filter"
            else spec
            for spec in DEFAULT_SPECS
        )
        with self.assertRaises(ValueError):
            sample_candidate(SamplingMode.MANUAL_RANGE, specs, np.random.default_rng(0))

    def test_empty_recommended_range(self):
        with self.assertRaises(ValueError):
            with_recommended_ranges(DEFAULT_SPECS, {"ibler_target": (0.2, 0.1)})


class ParameterSetSerializerTestCase(SimpleTestCase):
    def test_baseline_round_trip(self):
        serializer = ParameterSetSerializer(data=SME_BASELINE.as_dict())
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.save(), SME_BASELINE)

    def test_error_names_field(self):
        data = SME_BASELINE.as_dict() | {"mcs_filter": 0.005}
        serializer = ParameterSetSerializer(data=data)
        self.assertFalse(serializer.is_valid())
        self.assertIn("mcs_filter", serializer.errors)

    def test_representation(self):
        data = ParameterSetSerializer(SME_BASELINE).data
        self.assertEqual(data["initial_rank"], 2)
        self.assertIsInstance(SME_BASELINE, ParameterSet)

    def test_recommended_ranges_field(self):
        field = RecommendedRangesField()
        self.assertEqual(
            field.to_internal_value({"ibler_target": [0.08, 0.12]}),
            {"ibler_target": (0.08, 0.12)},
        )
        with self.assertRaises(serializers.ValidationError):
            field.to_internal_value({"unknown": [0.0, 1.0]})
        with self.assertRaises(serializers.ValidationError):
            field.to_internal_value({"mcs_filter": [0.005, 0.5]})
