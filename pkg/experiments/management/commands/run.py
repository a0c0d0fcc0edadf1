from ...services import load_config, run_experiment
from ..base import ExperimentCommand


class Command(ExperimentCommand):
    """Полный эксперимент: базовая линия и поиск CEM"""

    help = "Запуск эксперимента по JSON конфигурации"

    def add_arguments(self, parser):
        parser.add_argument("config", help="Путь к JSON конфигурации")
        self.add_run_arguments(parser)
        parser.add_argument(
            "--stop-after-epoch",
            type=int,
            default=None,
            help="Остановиться после указанного числа эпох (продолжить - resume)",
        )

    def handle(self, *args, **options):
        cfg = load_config(
            options["config"], seed=options["seed"], output_dir=options["output_dir"]
        )
        report = run_experiment(
            cfg,
            workers=options["workers"],
            stop_after_epoch=options["stop_after_epoch"],
            registry=True,
        )
        write_report(self, report)


def write_report(command, report):
    if not report.finished:
        command.stdout.write(
            command.style.WARNING(
                f"Выполнено эпох {report.completed_epochs} из {report.epochs_total}, "
                f"чекпоинт в {report.output_dir}"
            )
        )
        return
    command.stdout.write(
        command.style.SUCCESS(
            f"Готово: лучшая награда {report.best_reward:.4f} "
            f"(эпоха {report.best_epoch}), "
            f"базовая линия {report.baseline.baseline_value:.4f}, "
            f"результаты в {report.output_dir}"
        )
    )
