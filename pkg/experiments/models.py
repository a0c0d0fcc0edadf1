from django.db import models


class RunStatus(models.TextChoices):
    CREATED = "created", "Создан"
    BASELINE = "baseline", "Оценка базовой линии"
    RUNNING = "running", "Идёт поиск"
    FINISHED = "finished", "Завершён"
    FAILED = "failed", "Ошибка"


class ExperimentRun(models.Model):
    """
    Запись о запуске эксперимента. Источник истины для возобновления -
    файлы в output_dir, здесь хранится реестр для запросов.
    """

    name = models.CharField(
        max_length=100,
        verbose_name="Название",
        help_text="Название эксперимента из конфигурации",
    )
    seed = models.BigIntegerField(
        verbose_name="Seed",
        help_text="Базовый seed эксперимента",
    )
    config = models.JSONField(
        verbose_name="Конфигурация",
        help_text="Нормализованный JSON конфигурации",
    )
    status = models.CharField(
        max_length=20,
        choices=RunStatus.choices,
        default=RunStatus.CREATED,
        verbose_name="Статус",
    )
    baseline_value = models.FloatField(
        null=True,
        blank=True,
        verbose_name="Базовая линия",
        help_text="Максимальная награда сессий с параметрами эксперта",
    )
    output_dir = models.CharField(
        max_length=500,
        verbose_name="Каталог результатов",
    )
    created_at = models.DateTimeField(auto_now_add=True, verbose_name="Создан")
    updated_at = models.DateTimeField(auto_now=True, verbose_name="Обновлён")

    def __str__(self):
        return f"{self.name} (seed={self.seed}, {self.get_status_display()})"

    class Meta:
        verbose_name = "Запуск эксперимента"
        verbose_name_plural = "Запуски экспериментов"
        ordering = ["-created_at"]


class EpochResult(models.Model):
    """Статистика наград одной эпохи CEM."""

    run = models.ForeignKey(
        ExperimentRun,
        on_delete=models.CASCADE,
        related_name="epochs",
        verbose_name="Запуск",
    )
    epoch = models.PositiveIntegerField(verbose_name="Эпоха")
    p25 = models.FloatField(verbose_name="25-й перцентиль")
    median = models.FloatField(verbose_name="Медиана")
    mean = models.FloatField(verbose_name="Среднее")
    p75 = models.FloatField(verbose_name="75-й перцентиль")
    baseline = models.FloatField(verbose_name="Базовая линия")
    best_reward = models.FloatField(verbose_name="Лучшая награда")
    best_action = models.JSONField(verbose_name="Лучший набор параметров")

    def __str__(self):
        return f"{self.run.name}: эпоха {self.epoch}"

    class Meta:
        verbose_name = "Результат эпохи"
        verbose_name_plural = "Результаты эпох"
        ordering = ["run", "epoch"]
        constraints = [
            models.UniqueConstraint(fields=["run", "epoch"], name="unique_run_epoch"),
        ]
