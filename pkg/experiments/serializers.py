from pathlib import Path

from django.conf import settings
from rest_framework import serializers

from actions.serializers import ParameterSetSerializer, RecommendedRangesField
from actions.space import DEFAULT_SPECS, SME_BASELINE, with_recommended_ranges
from kpi.features import build_schema
from kpi.objective import DEFAULT_OBJECTIVE
from kpi.serializers import ObjectiveConfigSerializer
from optimizer.cem import DEFAULT_ELITE_FRAC, DEFAULT_STDDEV_FLOOR, SeedingMix
from optimizer.environment import EnvConfig
from optimizer.policy import PolicyShape
from scheduler.scenario import (ScenarioError, read_scenario_document,
                                scenario_from_document)

from .configuration import BaselineSettings, ExperimentConfig, OptimizerSettings

SECTIONS = ("env", "optimizer", "baseline")


class EnvSectionSerializer(serializers.Serializer):
    session_duration_s = serializers.FloatField(default=30.0, min_value=0.0)
    x_seconds = serializers.IntegerField(default=5, min_value=0)
    y_seconds = serializers.IntegerField(default=5, min_value=0)
    max_constraint_retries = serializers.IntegerField(default=3, min_value=0)


class OptimizerSectionSerializer(serializers.Serializer):
    population = serializers.IntegerField(default=50, min_value=2)
    elite_frac = serializers.FloatField(default=DEFAULT_ELITE_FRAC)
    epochs = serializers.IntegerField(default=150, min_value=1)
    stddev_floor = serializers.FloatField(default=DEFAULT_STDDEV_FLOOR, min_value=0.0)
    hidden_dim = serializers.IntegerField(default=16, min_value=1)
    grounded_fraction = serializers.FloatField(
        default=0.5, min_value=0.0, max_value=1.0
    )
    manual_fraction = serializers.FloatField(default=0.5, min_value=0.0, max_value=1.0)

    def validate_elite_frac(self, value):
        if not 0.0 < value <= 1.0:
            raise serializers.ValidationError("elite_frac должен лежать в (0, 1]")
        return value


class BaselineSectionSerializer(serializers.Serializer):
    parameters = ParameterSetSerializer(required=False)
    n_sessions = serializers.IntegerField(default=50, min_value=1)


class ExperimentConfigSerializer(serializers.Serializer):
    """
    Конфигурация эксперимента (один JSON документ).

    scenario - встроенный JSON сценария; пути к файлам подставляются
    при загрузке (experiments.services.load_config). Отсутствующие секции
    получают значения по умолчанию, objective по умолчанию - веса
    0.22 / 0.29 / 0.28 / 0.15 / 0.06.
    """

    name = serializers.CharField(max_length=100, default="experiment")
    seed = serializers.IntegerField(default=0, min_value=0)
    output_dir = serializers.CharField(required=False, allow_blank=False)
    scenario = serializers.DictField(required=False)
    env = EnvSectionSerializer()
    objective = ObjectiveConfigSerializer(required=False)
    optimizer = OptimizerSectionSerializer()
    baseline = BaselineSectionSerializer()
    recommended_ranges = RecommendedRangesField(required=False, default=dict)

    def to_internal_value(self, data):
        if isinstance(data, dict):
            data = {**{section: {} for section in SECTIONS}, **data}
        return super().to_internal_value(data)

    def validate_scenario(self, value):
        try:
            scenario_from_document(value)
        except ScenarioError as exc:
            raise serializers.ValidationError(str(exc))
        return value

    def validate(self, data):
        if data["env"]["session_duration_s"] <= 0:
            raise serializers.ValidationError(
                {"env": "Длительность сессии должна быть положительной"}
            )
        default_dir = Path(settings.EXPERIMENT_OUTPUT_DIR) / data["name"]
        output_dir = Path(data.get("output_dir") or default_dir)
        if output_dir.exists() and not output_dir.is_dir():
            raise serializers.ValidationError(
                {"output_dir": f"{output_dir} не является каталогом"}
            )
        data["output_dir"] = str(output_dir)
        return data

    def create(self, validated_data):
        specs = with_recommended_ranges(
            DEFAULT_SPECS, validated_data["recommended_ranges"]
        )
        if "scenario" in validated_data:
            scenario = scenario_from_document(validated_data["scenario"])
        else:
            scenario = scenario_from_document(read_scenario_document(), "default")

        objective = DEFAULT_OBJECTIVE
        if "objective" in validated_data:
            objective_serializer = ObjectiveConfigSerializer()
            objective = objective_serializer.create(validated_data["objective"])

        baseline_section = validated_data["baseline"]
        baseline_parameters = SME_BASELINE
        if "parameters" in baseline_section:
            baseline_parameters = ParameterSetSerializer().create(
                baseline_section["parameters"]
            )

        env_section = validated_data["env"]
        try:
            env = EnvConfig(
                scenario=scenario,
                session_duration_s=env_section["session_duration_s"],
                x_seconds=env_section["x_seconds"],
                y_seconds=env_section["y_seconds"],
                max_constraint_retries=env_section["max_constraint_retries"],
                objective=objective,
                base_seed=validated_data["seed"],
                specs=specs,
                baseline_action=baseline_parameters,
            )
        except ScenarioError as exc:
            raise serializers.ValidationError({"env": str(exc)})

        optimizer_section = validated_data["optimizer"]
        optimizer = OptimizerSettings(
            population=optimizer_section["population"],
            elite_frac=optimizer_section["elite_frac"],
            epochs=optimizer_section["epochs"],
            stddev_floor=optimizer_section["stddev_floor"],
            policy=PolicyShape(
                input_dim=len(build_schema(len(scenario.ues))),
                hidden_dim=optimizer_section["hidden_dim"],
                output_dim=len(specs),
            ),
            seeding=SeedingMix(
                grounded_fraction=optimizer_section["grounded_fraction"],
                manual_fraction=optimizer_section["manual_fraction"],
                specs=specs,
            ),
        )
        return ExperimentConfig(
            name=validated_data["name"],
            seed=validated_data["seed"],
            output_dir=Path(validated_data["output_dir"]),
            env=env,
            optimizer=optimizer,
            baseline=BaselineSettings(
                parameters=baseline_parameters,
                n_sessions=baseline_section["n_sessions"],
            ),
            document=self.initial_data,
        )
