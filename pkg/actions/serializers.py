from rest_framework import serializers

from .space import SPECS_BY_NAME, ParameterError, validate


class ParameterSetSerializer(serializers.Serializer):
    """
    Сериализатор набора параметров планировщика.

    Принимает значения в единицах параметров (0.1, а не индекс 10),
    проверяет сетку и диапазоны через actions.space.validate.
    create() возвращает неизменяемый ParameterSet.
    """

    ibler_target = serializers.FloatField(help_text="Целевой IBLER, 0..0.99 шаг 0.01")
    adaptive_mcs_selection = serializers.BooleanField(help_text="Адаптивный выбор MCS")
    pmi_enhancement = serializers.BooleanField(help_text="Улучшение PMI")
    mcs_filter = serializers.FloatField(help_text="Фильтр MCS, 0..2 шаг 0.01")
    initial_rank = serializers.IntegerField(help_text="Начальный ранг, 1..8")
    harq_enhancement = serializers.BooleanField(help_text="Улучшение HARQ")
    cqi_filter_coeff = serializers.FloatField(help_text="Коэффициент фильтра CQI")
    pdcch_adaptive = serializers.BooleanField(help_text="Адаптивный уровень агрегации")
    fairness_exponent = serializers.FloatField(help_text="Показатель PF, 0..2")
    max_mcs_cap = serializers.IntegerField(help_text="Потолок MCS, 0..27")

    def validate(self, data):
        try:
            validate(data)
        except ParameterError as exc:
            raise serializers.ValidationError({exc.field: str(exc)})
        return data

    def create(self, validated_data):
        return validate(validated_data)

    def to_representation(self, instance):
        return instance.as_dict()


class RecommendedRangesField(serializers.DictField):
    """
    Переопределение рекомендованных экспертом диапазонов:
    {"ibler_target": [0.08, 0.12], ...}.
    """

    child = serializers.ListField(
        child=serializers.FloatField(), min_length=2, max_length=2
    )

    def to_internal_value(self, data):
        value = super().to_internal_value(data)
        for name, (lo, hi) in value.items():
            spec = SPECS_BY_NAME.get(name)
            if spec is None:
                raise serializers.ValidationError(f"Неизвестный параметр: {name}")
            try:
                spec.range_indices(lo, hi)
            except ValueError as exc:
                raise serializers.ValidationError(str(exc))
        return {name: tuple(pair) for name, pair in value.items()}
