from django.conf import settings
from django.core.management import BaseCommand, CommandError

from actions.space import ParameterError
from optimizer.environment import EnvironmentInfeasibleError
from scheduler.scenario import ScenarioError

from ..services import BaselineInfeasibleError, ExperimentConfigError

CONFIG_ERROR_CODE = 2
INFEASIBLE_ERROR_CODE = 3


class ExperimentCommand(BaseCommand):
    """
    Общие флаги команд эксперимента и перевод доменных ошибок в коды возврата:
    2 - ошибка конфигурации, 3 - недостижимые ограничения.
    """

    def add_run_arguments(self, parser):
        parser.add_argument(
            "--seed", type=int, default=None, help="Переопределить seed"
        )
        parser.add_argument(
            "--workers",
            type=int,
            default=settings.EXPERIMENT_WORKERS,
            help="Число процессов для оценки кандидатов",
        )
        parser.add_argument(
            "--output-dir",
            default=None,
            help="Каталог результатов (по умолчанию из конфигурации)",
        )

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except ExperimentConfigError as exc:
            raise CommandError(
                f"Ошибка конфигурации: {exc.detail}", returncode=CONFIG_ERROR_CODE
            ) from exc
        except (ParameterError, ScenarioError) as exc:
            raise CommandError(
                f"Ошибка конфигурации: {exc}", returncode=CONFIG_ERROR_CODE
            ) from exc
        except (EnvironmentInfeasibleError, BaselineInfeasibleError) as exc:
            raise CommandError(str(exc), returncode=INFEASIBLE_ERROR_CODE) from exc
