import json
from pathlib import Path

from rest_framework.exceptions import ValidationError

from actions.serializers import ParameterSetSerializer
from actions.space import SME_BASELINE
from kpi.aggregation import aggregate
from kpi.export import write_bins_csv
from scheduler.scenario import load_scenario
from scheduler.session import run_session
from scheduler.trace import write_trace_csv

from ...services import ExperimentConfigError
from ..base import ExperimentCommand


class Command(ExperimentCommand):
    """Одна сессия симулятора: послотовая трасса и бины в CSV"""

    help = "Симуляция одной сессии и выгрузка трассы TTI и бинов"

    def add_arguments(self, parser):
        parser.add_argument("scenario", help="JSON сценария или default")
        parser.add_argument(
            "parameters",
            nargs="?",
            default=None,
            help="JSON набора параметров (по умолчанию - эксперта)",
        )
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument(
            "--duration", type=float, default=10.0, help="Длительность сессии, с"
        )
        parser.add_argument(
            "--output-dir", default=".", help="Каталог для trace.csv и bins.csv"
        )

    def handle(self, *args, **options):
        source = options["scenario"]
        scenario = load_scenario(None if source == "default" else source)
        params = self.load_parameters(options["parameters"])
        traces = run_session(scenario, params, options["seed"], options["duration"])
        bins = aggregate(traces, scenario.settings)

        output_dir = Path(options["output_dir"])
        output_dir.mkdir(parents=True, exist_ok=True)
        write_trace_csv(traces, output_dir / "trace.csv")
        write_bins_csv(bins, output_dir / "bins.csv")
        self.stdout.write(
            self.style.SUCCESS(
                f"{len(traces)} слотов, {len(bins)} бинов записаны в {output_dir}"
            )
        )

    def load_parameters(self, path):
        if path is None:
            return SME_BASELINE
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ExperimentConfigError(
                f"Не удалось прочитать параметры {path}: {exc}"
            ) from exc
        serializer = ParameterSetSerializer(data=data)
        if not serializer.is_valid():
            raise ExperimentConfigError(serializer.errors)
        try:
            return serializer.save()
        except ValidationError as exc:
            raise ExperimentConfigError(exc.detail) from exc
