from ...services import emit_plot_data
from ..base import ExperimentCommand


class Command(ExperimentCommand):
    """Данные для gnuplot из результатов эксперимента"""

    help = "Запись файлов .dat (награды и KPI по эпохам) в каталог plot/"

    def add_arguments(self, parser):
        parser.add_argument("report", help="Каталог результатов или summary.json")

    def handle(self, *args, **options):
        written = emit_plot_data(options["report"])
        for path in written:
            self.stdout.write(str(path))
        self.stdout.write(self.style.SUCCESS(f"Записано файлов: {len(written)}"))
