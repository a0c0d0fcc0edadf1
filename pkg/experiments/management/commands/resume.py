from django.conf import settings

from ...services import resume_experiment
from ..base import ExperimentCommand
from .run import write_report


class Command(ExperimentCommand):
    """Продолжение прерванного эксперимента с последнего чекпоинта"""

    help = "Возобновление эксперимента из checkpoint.json"

    def add_arguments(self, parser):
        parser.add_argument("checkpoint", help="Путь к checkpoint.json")
        parser.add_argument(
            "--workers",
            type=int,
            default=settings.EXPERIMENT_WORKERS,
            help="Число процессов для оценки кандидатов",
        )
        parser.add_argument("--stop-after-epoch", type=int, default=None)

    def handle(self, *args, **options):
        report = resume_experiment(
            options["checkpoint"],
            workers=options["workers"],
            stop_after_epoch=options["stop_after_epoch"],
            registry=True,
        )
        write_report(self, report)
