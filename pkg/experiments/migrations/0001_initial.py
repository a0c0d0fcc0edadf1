# Generated by Django 5.2.4 on 2026-10-19 12:00

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="ExperimentRun",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                (
                    "name",
                    models.CharField(
                        help_text="Название эксперимента из конфигурации",
                        max_length=100,
                        verbose_name="Название",
                    ),
                ),
                (
                    "seed",
                    models.BigIntegerField(
                        help_text="Базовый seed эксперимента", verbose_name="Seed"
                    ),
                ),
                (
                    "config",
                    models.JSONField(
                        help_text="Нормализованный JSON конфигурации",
                        verbose_name="Конфигурация",
                    ),
                ),
                (
                    "status",
                    models.CharField(
                        choices=[
                            ("created", "Создан"),
                            ("baseline", "Оценка базовой линии"),
                            ("running", "Идёт поиск"),
                            ("finished", "Завершён"),
                            ("failed", "Ошибка"),
                        ],
                        default="created",
                        max_length=20,
                        verbose_name="Статус",
                    ),
                ),
                (
                    "baseline_value",
                    models.FloatField(
                        blank=True,
                        help_text="Максимальная награда сессий с параметрами эксперта",
                        null=True,
                        verbose_name="Базовая линия",
                    ),
                ),
                (
                    "output_dir",
                    models.CharField(
                        max_length=500, verbose_name="Каталог результатов"
                    ),
                ),
                (
                    "created_at",
                    models.DateTimeField(auto_now_add=True, verbose_name="Создан"),
                ),
                (
                    "updated_at",
                    models.DateTimeField(auto_now=True, verbose_name="Обновлён"),
                ),
            ],
            options={
                "verbose_name": "Запуск эксперимента",
                "verbose_name_plural": "Запуски экспериментов",
                "ordering": ["-created_at"],
            },
        ),
        migrations.CreateModel(
            name="EpochResult",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                ("epoch", models.PositiveIntegerField(verbose_name="Эпоха")),
                ("p25", models.FloatField(verbose_name="25-й перцентиль")),
                ("median", models.FloatField(verbose_name="Медиана")),
                ("mean", models.FloatField(verbose_name="Среднее")),
                ("p75", models.FloatField(verbose_name="75-й перцентиль")),
                ("baseline", models.FloatField(verbose_name="Базовая линия")),
                ("best_reward", models.FloatField(verbose_name="Лучшая награда")),
                (
                    "best_action",
                    models.JSONField(verbose_name="Лучший набор параметров"),
                ),
                (
                    "run",
                    models.ForeignKey(
                        on_delete=django.db.models.deletion.CASCADE,
                        related_name="epochs",
                        to="experiments.experimentrun",
                        verbose_name="Запуск",
                    ),
                ),
            ],
            options={
                "verbose_name": "Результат эпохи",
                "verbose_name_plural": "Результаты эпох",
                "ordering": ["run", "epoch"],
                "constraints": [
                    models.UniqueConstraint(
                        fields=("run", "epoch"), name="unique_run_epoch"
                    )
                ],
            },
        ),
    ]
