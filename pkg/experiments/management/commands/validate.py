from kpi.features import build_schema

from ...services import load_config
from ..base import ExperimentCommand


class Command(ExperimentCommand):
    """Проверка конфигурации эксперимента без запуска симуляции"""

    help = "Проверка JSON конфигурации эксперимента"

    def add_arguments(self, parser):
        parser.add_argument("config", help="Путь к JSON конфигурации")
        parser.add_argument(
            "--feature-schema",
            default=None,
            help="Записать схему вектора состояния (имена и границы признаков) в JSON",
        )

    def handle(self, *args, **options):
        cfg = load_config(options["config"])
        schema = build_schema(len(cfg.env.scenario.ues))
        if options["feature_schema"]:
            schema.export(options["feature_schema"])
            self.stdout.write(f"Схема признаков записана в {options['feature_schema']}")
        self.stdout.write(
            self.style.SUCCESS(
                f"Конфигурация {cfg.name} корректна: {cfg.optimizer.epochs} эпох, "
                f"популяция {cfg.optimizer.population}, {len(schema)} признаков, "
                f"{cfg.optimizer.policy.weight_count} весов"
            )
        )
