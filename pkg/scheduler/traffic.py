from .scenario import AppKind


class TrafficSource:
    """
    Поступление данных в буфер одного UE.

    Видео и мессенджер приходят порциями раз в chunk-период (размер порции
    умножается на U(0.5, 1.5)), тест скорости держит буфер полным,
    а по окончании фазы остаток буфера сбрасывается.
    """

    def __init__(self, segments, settings):
        sps = settings.slots_per_second
        self._settings = settings
        self._segments = [
            (round(phase.start_s * sps), round(phase.end_s * sps), phase)
            for phase in sorted(segments, key=lambda phase: phase.start_s)
        ]
        self._position = 0
        self._full_buffer = False

    def _period(self, app_kind):
        if app_kind == AppKind.VIDEO_STREAM:
            return self._settings.video_chunk_slots
        return self._settings.messaging_chunk_slots

    def feed(self, slot, ue_state, rng_stream):
        segments = self._segments
        while self._position < len(segments) and segments[self._position][1] <= slot:
            self._position += 1
        active = None
        if self._position < len(segments) and segments[self._position][0] <= slot:
            active = segments[self._position]

        full_buffer = active is not None and active[2].is_full_buffer
        if self._full_buffer and not full_buffer:
            ue_state.buffer_bits = ue_state.inflight_bits
        self._full_buffer = full_buffer
        if active is None:
            return
        start, _, phase = active
        if full_buffer:
            ue_state.buffer_bits = max(
                ue_state.buffer_bits, self._settings.full_buffer_bits
            )
            return
        if phase.app_kind == AppKind.IDLE or phase.offered_rate_bps <= 0:
            return
        period = self._period(phase.app_kind)
        if (slot - start) % period:
            return
        chunk = phase.offered_rate_bps * period / self._settings.slots_per_second
        chunk *= rng_stream.uniform(0.5, 1.5)
        ue_state.buffer_bits = min(
            self._settings.buffer_cap_bits, ue_state.buffer_bits + int(chunk)
        )
