from rest_framework import serializers

from .objective import (HUNDREDTHS, Direction, ObjectiveConfig,
                        ObjectiveConfigError, ObjectiveEntry,
                        objective_from_preset)
from .summary import KPI_NAMES

WEIGHT_TOLERANCE = 1e-9


class NormalizationSerializer(serializers.Serializer):
    lo = serializers.FloatField()
    hi = serializers.FloatField()
    direction = serializers.ChoiceField(
        choices=Direction.choices, default=Direction.MAXIMIZE
    )

    def validate(self, data):
        if data["lo"] >= data["hi"]:
            raise serializers.ValidationError("lo должно быть меньше hi")
        return data


class ObjectiveEntrySerializer(serializers.Serializer):
    """
    Запись целевой функции. Вес задаётся долей с шагом 0.01.
    """

    kpi_name = serializers.ChoiceField(choices=[(name, name) for name in KPI_NAMES])
    weight = serializers.FloatField(min_value=0.0, max_value=1.0)
    normalization = NormalizationSerializer()

    def validate_weight(self, value):
        hundredths = round(value * HUNDREDTHS)
        if abs(value * HUNDREDTHS - hundredths) > WEIGHT_TOLERANCE * HUNDREDTHS:
            raise serializers.ValidationError("Вес должен быть кратен 0.01")
        return hundredths


class PresetSerializer(serializers.Serializer):
    """Цель оператора: ёмкость / покрытие / качество в сотых долях."""

    capacity = serializers.IntegerField(min_value=0, max_value=100)
    coverage = serializers.IntegerField(min_value=0, max_value=100)
    quality = serializers.IntegerField(min_value=0, max_value=100)

    def validate(self, data):
        if data["capacity"] + data["coverage"] + data["quality"] != HUNDREDTHS:
            raise serializers.ValidationError("Сумма пресета должна быть 100")
        return data


class ObjectiveConfigSerializer(serializers.Serializer):
    """
    Секция objective конфигурации эксперимента: явный список entries
    или пресет {capacity, coverage, quality}.
    """

    entries = ObjectiveEntrySerializer(many=True, required=False)
    preset = PresetSerializer(required=False)

    def validate(self, data):
        if ("entries" in data) == ("preset" in data):
            raise serializers.ValidationError("Нужно задать либо entries, либо preset")
        if "entries" in data:
            total = sum(entry["weight"] for entry in data["entries"])
            if total != HUNDREDTHS:
                message = f"Сумма весов должна быть 1.00, получено {total / 100:.2f}"
                raise serializers.ValidationError({"entries": message})
        return data

    def create(self, validated_data):
        try:
            if "preset" in validated_data:
                return objective_from_preset(**validated_data["preset"])
            return ObjectiveConfig(
                entries=tuple(
                    ObjectiveEntry(
                        kpi_name=entry["kpi_name"],
                        weight_hundredths=entry["weight"],
                        lo=entry["normalization"]["lo"],
                        hi=entry["normalization"]["hi"],
                        direction=entry["normalization"]["direction"],
                    )
                    for entry in validated_data["entries"]
                )
            )
        except ObjectiveConfigError as exc:
            raise serializers.ValidationError(str(exc))
