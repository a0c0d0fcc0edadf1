from collections import deque
from dataclasses import dataclass, field

from django.db import models

from .channel import instantaneous_cqi


class HarqState(models.TextChoices):
    IDLE = "idle", "Свободен"
    AWAITING_FEEDBACK = "awaiting_feedback", "Ожидает ACK/NACK"
    PENDING_RETX = "pending_retx", "Ожидает повтора"


@dataclass(slots=True)
class HarqProcess:
    """
    Процесс HARQ. payload_bits - полезные биты буфера в TB
    (tb_bits может включать дополнение до целого числа RB).
    """

    state: str = HarqState.IDLE
    tb_bits: int = 0
    payload_bits: int = 0
    mcs: int = 0
    rank: int = 1
    retx_count: int = 0
    feedback_slot: int = -1
    outcome: str | None = None

    def release(self):
        self.state = HarqState.IDLE
        self.tb_bits = 0
        self.payload_bits = 0
        self.retx_count = 0
        self.feedback_slot = -1
        self.outcome = None


@dataclass(slots=True)
class UeState:
    sinr_db: float
    filtered_cqi: float
    olla_offset_db: float = 0.0
    rank: int = 1
    buffer_bits: int = 0
    inflight_bits: int = 0
    harq_processes: list = field(default_factory=list)
    deviation_db: float = 0.0
    avg_throughput_bps: float = 1.0
    mcs_smoothed: float | None = None
    recent_errors: deque = field(default_factory=deque)
    recent_error_count: int = 0

    @classmethod
    def initial(cls, profile, settings, initial_rank=1, deviation_db=0.0):
        sinr_db = profile.mean_sinr_db + deviation_db
        return cls(
            sinr_db=sinr_db,
            filtered_cqi=instantaneous_cqi(sinr_db, settings),
            rank=initial_rank,
            deviation_db=deviation_db,
            harq_processes=[HarqProcess() for _ in range(settings.harq_process_count)],
            recent_errors=deque(maxlen=settings.adaptive_mcs_window),
        )

    @property
    def schedulable_bits(self):
        return max(0, self.buffer_bits - self.inflight_bits)

    @property
    def initial_error_rate(self):
        """Доля ошибок первичных передач в скользящем окне."""
        if not self.recent_errors:
            return 0.0
        return self.recent_error_count / len(self.recent_errors)

    def record_initial_outcome(self, error):
        if len(self.recent_errors) == self.recent_errors.maxlen:
            self.recent_error_count -= self.recent_errors[0]
        self.recent_errors.append(int(error))
        self.recent_error_count += int(error)

    def idle_process(self):
        for process in self.harq_processes:
            if process.state == HarqState.IDLE:
                return process
        return None

    def pending_retx_process(self):
        for process in self.harq_processes:
            if process.state == HarqState.PENDING_RETX:
                return process
        return None
