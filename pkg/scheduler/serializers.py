from rest_framework import serializers

from .scenario import (FULL_BUFFER, AppKind, AppPhase, CoverageClass, Scenario,
                       ScenarioError, SimulatorSettings, UeProfile)


class AppPhaseSerializer(serializers.Serializer):
    """
    Фаза трафика приложения.
    Для speed_test скорость не задаётся (полный буфер), для idle равна нулю.
    """

    app_kind = serializers.ChoiceField(choices=AppKind.choices)
    start_s = serializers.FloatField(min_value=0.0, help_text="Начало фазы, с")
    duration_s = serializers.FloatField(help_text="Длительность фазы, с")
    offered_rate_bps = serializers.FloatField(
        required=False,
        allow_null=True,
        min_value=0.0,
        default=0.0,
        help_text="Предлагаемая нагрузка, бит/с",
    )

    def validate_duration_s(self, value):
        if value <= 0:
            raise serializers.ValidationError("Длительность должна быть положительной")
        return value

    def validate(self, data):
        if data["app_kind"] == AppKind.SPEED_TEST:
            data["offered_rate_bps"] = FULL_BUFFER
        elif data.get("offered_rate_bps") is None:
            raise serializers.ValidationError(
                {"offered_rate_bps": "Скорость обязательна для этого приложения"}
            )
        return data


class UeProfileSerializer(serializers.Serializer):
    ue_id = serializers.IntegerField(min_value=0)
    coverage_class = serializers.ChoiceField(choices=CoverageClass.choices)
    mean_sinr_db = serializers.FloatField()
    sinr_stddev_db = serializers.FloatField(min_value=0.0)
    traffic_profile = AppPhaseSerializer(many=True, required=False, default=list)


class SimulatorSettingsSerializer(serializers.Serializer):
    """
    Переопределение констант симулятора.

    Неизвестные ключи запрещены, значения проверяются по типу и диапазону;
    не заданные поля берутся из SimulatorSettings.
    """

    slots_per_second = serializers.IntegerField(required=False, min_value=1)
    bin_slots = serializers.IntegerField(required=False, min_value=1)
    tdd_pattern = serializers.RegexField(
        r"^[DU]*D[DU]*$",
        required=False,
        help_text="Цикл TDD из символов D и U, хотя бы один D",
    )
    n_rbs = serializers.IntegerField(required=False, min_value=1)
    ar_coeff = serializers.FloatField(required=False, min_value=0.0)
    cqi_offset_db = serializers.FloatField(required=False)
    cqi_db_per_step = serializers.FloatField(required=False)
    olla_step_down_db = serializers.FloatField(required=False)
    olla_limit_db = serializers.FloatField(required=False)
    bler_slope_db = serializers.FloatField(required=False)
    pmi_gain_db = serializers.FloatField(required=False, min_value=0.0)
    rank_penalty_db = serializers.FloatField(required=False, min_value=0.0)
    rank_sinr_threshold_db = serializers.FloatField(required=False)
    rank_sinr_step_db = serializers.FloatField(required=False)
    p_dtx = serializers.FloatField(required=False, min_value=0.0, max_value=1.0)
    pdcch_underprovision_dtx_factor = serializers.FloatField(
        required=False, min_value=1.0
    )
    harq_combining_gain_db = serializers.FloatField(required=False, min_value=0.0)
    max_retx = serializers.IntegerField(required=False, min_value=0)
    harq_process_count = serializers.IntegerField(required=False, min_value=1)
    feedback_delay_slots = serializers.IntegerField(required=False, min_value=1)
    cce_budget = serializers.IntegerField(required=False, min_value=1)
    adaptive_mcs_window = serializers.IntegerField(required=False, min_value=1)
    pf_window_slots = serializers.IntegerField(required=False, min_value=1)
    full_buffer_bits = serializers.IntegerField(required=False, min_value=1)
    buffer_cap_bits = serializers.IntegerField(required=False, min_value=1)
    pdcp_header_fraction = serializers.FloatField(
        required=False, min_value=0.0, max_value=0.99
    )
    video_chunk_slots = serializers.IntegerField(required=False, min_value=1)
    messaging_chunk_slots = serializers.IntegerField(required=False, min_value=1)
    ul_base_ack_ratio = serializers.FloatField(
        required=False, min_value=0.0, max_value=1.0
    )
    ul_ack_noise = serializers.FloatField(required=False, min_value=0.0)
    ul_coupling = serializers.FloatField(required=False, min_value=0.0)

    def _positive(self, value):
        if value <= 0:
            raise serializers.ValidationError("Значение должно быть положительным")
        return value

    validate_cqi_db_per_step = _positive
    validate_olla_step_down_db = _positive
    validate_olla_limit_db = _positive
    validate_bler_slope_db = _positive
    validate_rank_sinr_step_db = _positive

    def validate_ar_coeff(self, value):
        if value >= 1.0:
            raise serializers.ValidationError("ar_coeff должен быть меньше 1")
        return value

    def to_internal_value(self, data):
        if not isinstance(data, dict):
            raise serializers.ValidationError("Ожидается объект")
        unknown = sorted(set(data) - set(SimulatorSettings.field_names()))
        if unknown:
            raise serializers.ValidationError(
                {name: "Неизвестная константа симулятора" for name in unknown}
            )
        return super().to_internal_value(data)


class ScenarioSerializer(serializers.Serializer):
    """
    Сценарий соты (JSON).

    Формат:
    {
      "name": "default",
      "repeat_every_s": 10,
      "simulator": {"p_dtx": 0.005, ...},
      "ues": [{"ue_id": 0, "coverage_class": "excellent", "mean_sinr_db": 25,
               "sinr_stddev_db": 2, "traffic_profile": [...]}]
    }
    """

    name = serializers.CharField(max_length=100)
    repeat_every_s = serializers.FloatField(
        required=False, allow_null=True, default=None
    )
    simulator = SimulatorSettingsSerializer(required=False, default=dict)
    ues = UeProfileSerializer(many=True)

    def validate_ues(self, value):
        if not value:
            raise serializers.ValidationError("Нужен хотя бы один UE")
        ids = [ue["ue_id"] for ue in value]
        if len(set(ids)) != len(ids):
            raise serializers.ValidationError("ue_id должны быть уникальны")
        return value

    def create(self, validated_data):
        try:
            settings = SimulatorSettings(**validated_data.get("simulator", {}))
            ues = tuple(
                UeProfile(
                    ue_id=ue["ue_id"],
                    coverage_class=ue["coverage_class"],
                    mean_sinr_db=ue["mean_sinr_db"],
                    sinr_stddev_db=ue["sinr_stddev_db"],
                    traffic_profile=tuple(
                        AppPhase(**phase) for phase in ue["traffic_profile"]
                    ),
                )
                for ue in validated_data["ues"]
            )
            return Scenario(
                name=validated_data["name"],
                ues=ues,
                settings=settings,
                repeat_every_s=validated_data.get("repeat_every_s"),
            )
        except (ScenarioError, TypeError) as exc:
            raise serializers.ValidationError(str(exc))
