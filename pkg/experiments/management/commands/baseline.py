from ...services import BASELINE_FILE, load_config, run_baseline, write_baseline_csv
from ..base import ExperimentCommand


class Command(ExperimentCommand):
    """Оценка базовой линии: сессии с параметрами эксперта"""

    help = "Оценка базовой линии (максимальная награда сессий с параметрами эксперта)"

    def add_arguments(self, parser):
        parser.add_argument("config", help="Путь к JSON конфигурации")
        self.add_run_arguments(parser)

    def handle(self, *args, **options):
        cfg = load_config(
            options["config"], seed=options["seed"], output_dir=options["output_dir"]
        )
        baseline = run_baseline(cfg, workers=options["workers"])
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        path = cfg.output_dir / BASELINE_FILE
        write_baseline_csv(baseline, path)
        feasible = sum(baseline.constraint_ok)
        self.stdout.write(
            self.style.SUCCESS(
                f"Базовая линия {baseline.baseline_value:.4f} "
                f"({feasible} из {len(baseline.rewards)} сессий), таблица KPI: {path}"
            )
        )
