import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from django.db import models
from rest_framework.exceptions import ValidationError

FULL_BUFFER = math.inf

DEFAULT_SCENARIO_PATH = Path(__file__).resolve().parent / "scenarios" / "default.json"


class ScenarioError(ValueError):
    """Ошибка конфигурации сценария или симулятора."""


class CoverageClass(models.TextChoices):
    EXCELLENT = "excellent", "Отличное покрытие"
    MEDIUM = "medium", "Среднее покрытие"
    POOR = "poor", "Плохое покрытие"


class AppKind(models.TextChoices):
    VIDEO_STREAM = "video_stream", "Видео"
    MESSAGING = "messaging", "Мессенджер"
    SPEED_TEST = "speed_test", "Тест скорости"
    IDLE = "idle", "Простой"


# Строго положительные константы.
POSITIVE_SETTINGS = (
    "slots_per_second",
    "bin_slots",
    "n_rbs",
    "cqi_db_per_step",
    "olla_step_down_db",
    "olla_limit_db",
    "bler_slope_db",
    "rank_sinr_step_db",
    "harq_process_count",
    "feedback_delay_slots",
    "cce_budget",
    "adaptive_mcs_window",
    "pf_window_slots",
    "full_buffer_bits",
    "buffer_cap_bits",
    "video_chunk_slots",
    "messaging_chunk_slots",
)


@dataclass(frozen=True)
class SimulatorSettings:
    """Константы симулятора; любое поле можно переопределить в JSON сценария."""

    slots_per_second: int = 2000
    bin_slots: int = 2000
    tdd_pattern: str = "DDDDU"
    n_rbs: int = 273
    ar_coeff: float = 0.98
    cqi_offset_db: float = 6.0
    cqi_db_per_step: float = 2.0
    olla_step_down_db: float = 0.5
    olla_limit_db: float = 10.0
    bler_slope_db: float = 1.0
    pmi_gain_db: float = 1.0
    rank_penalty_db: float = 1.5
    rank_sinr_threshold_db: float = 10.0
    rank_sinr_step_db: float = 3.0
    p_dtx: float = 0.005
    pdcch_underprovision_dtx_factor: float = 4.0
    harq_combining_gain_db: float = 3.0
    max_retx: int = 3
    harq_process_count: int = 16
    feedback_delay_slots: int = 8
    cce_budget: int = 48
    adaptive_mcs_window: int = 200
    pf_window_slots: int = 100
    full_buffer_bits: int = 10**8
    buffer_cap_bits: int = 10**9
    pdcp_header_fraction: float = 0.02
    video_chunk_slots: int = 200
    messaging_chunk_slots: int = 2000
    ul_base_ack_ratio: float = 0.95
    ul_ack_noise: float = 0.01
    ul_coupling: float = 0.005

    def __post_init__(self):
        if not self.tdd_pattern or set(self.tdd_pattern) - {"D", "U"}:
            raise ScenarioError("tdd_pattern должен состоять из символов D и U")
        if "D" not in self.tdd_pattern:
            raise ScenarioError("tdd_pattern не содержит слотов DL")
        if not 0.0 <= self.ar_coeff < 1.0:
            raise ScenarioError("ar_coeff должен лежать в [0, 1)")
        if not 0.0 <= self.p_dtx <= 1.0:
            raise ScenarioError("p_dtx должен лежать в [0, 1]")
        for name in POSITIVE_SETTINGS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ScenarioError(f"{name} должен быть числом")
            if value <= 0:
                raise ScenarioError(f"{name} должен быть положительным")
        if self.max_retx < 0:
            raise ScenarioError("max_retx не может быть отрицательным")

    @property
    def dl_slots_per_second(self):
        cycle = len(self.tdd_pattern)
        return self.slots_per_second // cycle * self.tdd_pattern.count("D")

    def is_downlink(self, slot):
        return self.tdd_pattern[slot % len(self.tdd_pattern)] == "D"

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class AppPhase:
    app_kind: str
    start_s: float
    duration_s: float
    offered_rate_bps: float = 0.0

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ScenarioError("Длительность фазы должна быть положительной")
        if self.app_kind == AppKind.SPEED_TEST and self.offered_rate_bps != FULL_BUFFER:
            object.__setattr__(self, "offered_rate_bps", FULL_BUFFER)
        if self.app_kind == AppKind.IDLE:
            object.__setattr__(self, "offered_rate_bps", 0.0)

    @property
    def end_s(self):
        return self.start_s + self.duration_s

    @property
    def is_full_buffer(self):
        return self.offered_rate_bps == FULL_BUFFER


@dataclass(frozen=True)
class UeProfile:
    ue_id: int
    coverage_class: str
    mean_sinr_db: float
    sinr_stddev_db: float
    traffic_profile: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.sinr_stddev_db < 0:
            raise ScenarioError(f"UE {self.ue_id}: sinr_stddev_db < 0")
        phases = sorted(self.traffic_profile, key=lambda phase: phase.start_s)
        for previous, current in zip(phases, phases[1:]):
            if current.start_s < previous.end_s:
                raise ScenarioError(f"UE {self.ue_id}: фазы трафика пересекаются")
        object.__setattr__(self, "traffic_profile", tuple(phases))


@dataclass(frozen=True)
class SessionMeta:
    """Описание сессии для дескрипторов вектора признаков."""

    duration_s: float
    offered_load_bps: tuple
    full_buffer_fraction: float
    coverage_classes: tuple = ()


@dataclass(frozen=True)
class Scenario:
    """
    Сценарий соты: профили UE и константы симулятора.

    Если задан repeat_every_s, фазы трафика повторяются с этим периодом.
    """

    name: str
    ues: tuple
    settings: SimulatorSettings = field(default_factory=SimulatorSettings)
    repeat_every_s: float | None = None

    def __post_init__(self):
        if not self.ues:
            raise ScenarioError("Сценарий должен содержать хотя бы одного UE")
        if self.repeat_every_s is not None:
            if self.repeat_every_s <= 0:
                raise ScenarioError("repeat_every_s должен быть положительным")
            for ue in self.ues:
                phases = ue.traffic_profile
                if phases and phases[-1].end_s > self.repeat_every_s:
                    raise ScenarioError(
                        f"UE {ue.ue_id}: фаза выходит за период повтора"
                    )

    def phase_segments(self, profile, duration_s):
        """Фазы UE на интервале [0, duration_s) с учётом повторения."""
        if self.repeat_every_s is None:
            return [p for p in profile.traffic_profile if p.start_s < duration_s]
        segments = []
        cycles = math.ceil(duration_s / self.repeat_every_s)
        for cycle in range(cycles):
            shift = cycle * self.repeat_every_s
            for phase in profile.traffic_profile:
                if phase.start_s + shift < duration_s:
                    segments.append(replace(phase, start_s=phase.start_s + shift))
        return segments

    def describe(self, duration_s):
        loads = []
        full_buffer_time = 0.0
        for profile in self.ues:
            offered_bits = 0.0
            for phase in self.phase_segments(profile, duration_s):
                active = min(phase.end_s, duration_s) - phase.start_s
                if phase.is_full_buffer:
                    full_buffer_time += active
                else:
                    offered_bits += phase.offered_rate_bps * active
            loads.append(offered_bits / duration_s)
        return SessionMeta(
            duration_s=duration_s,
            offered_load_bps=tuple(loads),
            full_buffer_fraction=full_buffer_time / (duration_s * len(self.ues)),
            coverage_classes=tuple(ue.coverage_class for ue in self.ues),
        )

    def without_traffic(self):
        ues = tuple(replace(ue, traffic_profile=()) for ue in self.ues)
        return replace(self, name=f"{self.name}-idle", ues=ues)


def read_scenario_document(path=None):
    path = Path(path) if path else DEFAULT_SCENARIO_PATH
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"Не удалось прочитать сценарий {path}: {exc}") from exc


def scenario_from_document(data, source="<config>"):
    """Валидирует разобранный JSON сценария и строит Scenario."""
    from .serializers import ScenarioSerializer

    serializer = ScenarioSerializer(data=data)
    if not serializer.is_valid():
        raise ScenarioError(f"Некорректный сценарий {source}: {serializer.errors}")
    try:
        return serializer.save()
    except ValidationError as exc:
        raise ScenarioError(f"Некорректный сценарий {source}: {exc.detail}") from exc


def load_scenario(path=None):
    """Загружает и валидирует сценарий из JSON (по умолчанию - встроенный)."""
    source = path or DEFAULT_SCENARIO_PATH
    return scenario_from_document(read_scenario_document(path), source)
