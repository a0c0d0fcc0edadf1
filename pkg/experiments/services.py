"""
Оркестрация эксперимента: базовая линия, цикл CEM, файлы результатов,
чекпоинты и данные для графиков.

Симуляция и оптимизация не обращаются к базе данных; реестр запусков
(ExperimentRun, EpochResult) обновляет только процесс команды.
"""

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from rest_framework.exceptions import ValidationError

from actions.space import validate
from kpi.export import write_kpi_csv
from kpi.summary import KPI_NAMES, KpiVector
from optimizer.cem import (SearchDistribution, evaluate_population,
                           init_distribution, run_epoch)
from optimizer.environment import SchedulerEnv
from scheduler.scenario import ScenarioError, read_scenario_document

from .models import EpochResult, ExperimentRun, RunStatus
from .serializers import ExperimentConfigSerializer

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 2
BASELINE_SEED_OFFSET = 10**9

CONFIG_FILE = "config.json"
BASELINE_FILE = "baseline.csv"
EPOCHS_FILE = "epochs.csv"
STEPS_FILE = "steps.csv"
EVOLUTION_FILE = "kpi_evolution.csv"
BEST_FILE = "best_parameters.json"
SUMMARY_FILE = "summary.json"
CHECKPOINT_FILE = "checkpoint.json"
PLOT_DIR = "plot"
REWARDS_PLOT_FILE = "rewards.dat"
STEPS_PLOT_FILE = "steps.dat"

EVOLUTION_KPIS = (
    "dl_mac_throughput_bps",
    "dl_rlc_throughput_bps",
    "dl_ack_ratio",
    "ul_ack_ratio",
    "dl_mean_mcs",
    "cce2_utilization",
    "dl_nack_ratio",
    "dl_dtx_ratio",
)
EPOCH_COLUMNS = (
    "epoch",
    "p25",
    "median",
    "mean",
    "p75",
    "baseline",
    "best_reward",
    "constraint_failures",
    "best_action",
)
STEP_COLUMNS = (
    "epoch",
    "index",
    "origin",
    "session_seed",
    "constraint_ok",
    "retries_used",
    "reward",
    *KPI_NAMES,
    "action",
)
EVOLUTION_COLUMNS = ("epoch",) + tuple(
    column for name in EVOLUTION_KPIS for column in (name, f"{name}_baseline")
)
SEARCH_FILES = {
    EPOCHS_FILE: EPOCH_COLUMNS,
    STEPS_FILE: STEP_COLUMNS,
    EVOLUTION_FILE: EVOLUTION_COLUMNS,
}


class ExperimentConfigError(ValueError):
    """Конфигурация эксперимента не прошла проверку; detail - ошибки DRF."""

    def __init__(self, detail):
        self.detail = detail
        super().__init__(str(detail))


class BaselineInfeasibleError(ValueError):
    """Ни одна сессия с параметрами эксперта не прошла ограничения."""


def _fmt(value):
    return repr(float(value))


def _write_json(path, data):
    """Атомарная запись через временный файл."""
    tmp = path.with_name(path.name + ".tmp")
    text = json.dumps(data, indent=2, ensure_ascii=False) + "\n"
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def load_document(path, seed=None, output_dir=None):
    """
    Читает JSON конфигурации. Строковое поле scenario - путь к файлу
    сценария (относительно файла конфигурации), он встраивается в документ.
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ExperimentConfigError(
            f"Не удалось прочитать конфигурацию {path}: {exc}"
        ) from exc
    if not isinstance(document, dict):
        raise ExperimentConfigError("Конфигурация должна быть JSON объектом")
    scenario = document.get("scenario")
    if isinstance(scenario, str):
        scenario_path = Path(scenario)
        if not scenario_path.is_absolute():
            scenario_path = path.parent / scenario_path
        try:
            document["scenario"] = read_scenario_document(scenario_path)
        except ScenarioError as exc:
            raise ExperimentConfigError({"scenario": [str(exc)]}) from exc
    if seed is not None:
        document["seed"] = seed
    if output_dir is not None:
        document["output_dir"] = str(output_dir)
    return document


def build_config(document):
    serializer = ExperimentConfigSerializer(data=document)
    if not serializer.is_valid():
        raise ExperimentConfigError(serializer.errors)
    try:
        return serializer.save()
    except ValidationError as exc:
        raise ExperimentConfigError(exc.detail) from exc


def load_config(path, seed=None, output_dir=None):
    return build_config(load_document(path, seed=seed, output_dir=output_dir))


@dataclass
class BaselineResult:
    """
    Сессии с параметрами эксперта. baseline_value - максимальная награда
    среди сессий, прошедших ограничения.
    """

    rewards: list
    baseline_value: float
    kpi_table: list
    session_seeds: list
    constraint_ok: list
    best_index: int

    @property
    def best_kpis(self):
        return self.kpi_table[self.best_index]

    def to_dict(self):
        return {
            "rewards": self.rewards,
            "baseline_value": self.baseline_value,
            "kpi_table": [kpis.as_dict() for kpis in self.kpi_table],
            "session_seeds": self.session_seeds,
            "constraint_ok": self.constraint_ok,
            "best_index": self.best_index,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            rewards=list(data["rewards"]),
            baseline_value=data["baseline_value"],
            kpi_table=[KpiVector(**kpis) for kpis in data["kpi_table"]],
            session_seeds=list(data["session_seeds"]),
            constraint_ok=list(data["constraint_ok"]),
            best_index=data["best_index"],
        )


def run_baseline(cfg, workers=1):
    n = cfg.baseline.n_sessions
    env = SchedulerEnv(cfg.env)
    offsets = [BASELINE_SEED_OFFSET + session for session in range(n)]
    results = evaluate_population(env, [cfg.baseline.parameters] * n, offsets, workers)

    feasible = [index for index, result in enumerate(results) if result.constraint_ok]
    if not feasible:
        raise BaselineInfeasibleError(
            f"Ни одна из {n} сессий базовой линии не прошла ограничения "
            f"X={cfg.env.x_seconds}, Y={cfg.env.y_seconds}"
        )
    rewards = [result.reward for result in results]
    best = max(feasible, key=lambda index: (rewards[index], -index))
    logger.info(
        "Базовая линия %.4f: %s из %s сессий прошли ограничения",
        rewards[best],
        len(feasible),
        n,
    )
    return BaselineResult(
        rewards=rewards,
        baseline_value=rewards[best],
        kpi_table=[result.kpis for result in results],
        session_seeds=[result.session_seed for result in results],
        constraint_ok=[result.constraint_ok for result in results],
        best_index=best,
    )


def write_baseline_csv(baseline, path):
    rows = [
        ((session, seed, int(ok), _fmt(value)), kpis)
        for session, (seed, ok, value, kpis) in enumerate(
            zip(
                baseline.session_seeds,
                baseline.constraint_ok,
                baseline.rewards,
                baseline.kpi_table,
            )
        )
    ]
    key_columns = ("session", "session_seed", "constraint_ok", "reward")
    write_kpi_csv(rows, path, key_columns=key_columns)


@dataclass
class ExperimentReport:
    """Ход поиска; после последней эпохи - итог эксперимента."""

    output_dir: Path
    baseline: BaselineResult
    epochs_total: int
    completed_epochs: int = 0
    best_reward: float | None = None
    best_epoch: int | None = None
    best_action: object = None
    first_median_epoch: int | None = None
    first_p25_epoch: int | None = None
    history: list = field(default_factory=list)

    @property
    def finished(self):
        return self.completed_epochs >= self.epochs_total

    def record(self, stats):
        baseline = self.baseline.baseline_value
        if self.first_median_epoch is None and stats.median >= baseline:
            self.first_median_epoch = stats.epoch
        if self.first_p25_epoch is None and stats.p25 >= baseline:
            self.first_p25_epoch = stats.epoch
        if self.best_reward is None or stats.best_reward > self.best_reward:
            self.best_reward = stats.best_reward
            self.best_epoch = stats.epoch
            self.best_action = stats.best_action
        self.history.append(
            {
                "epoch": stats.epoch,
                "p25": stats.p25,
                "median": stats.median,
                "mean": stats.mean,
                "p75": stats.p75,
                "best_reward": stats.best_reward,
            }
        )
        self.completed_epochs += 1

    def to_dict(self):
        return {
            "epochs_total": self.epochs_total,
            "completed_epochs": self.completed_epochs,
            "best_reward": self.best_reward,
            "best_epoch": self.best_epoch,
            "best_action": self.best_action.as_dict() if self.best_action else None,
            "first_median_epoch": self.first_median_epoch,
            "first_p25_epoch": self.first_p25_epoch,
            "history": self.history,
        }

    @classmethod
    def from_dict(cls, data, output_dir, baseline):
        best_action = data["best_action"]
        return cls(
            output_dir=output_dir,
            baseline=baseline,
            epochs_total=data["epochs_total"],
            completed_epochs=data["completed_epochs"],
            best_reward=data["best_reward"],
            best_epoch=data["best_epoch"],
            best_action=validate(best_action) if best_action else None,
            first_median_epoch=data["first_median_epoch"],
            first_p25_epoch=data["first_p25_epoch"],
            history=list(data["history"]),
        )

    def summary(self, cfg):
        return {
            "name": cfg.name,
            "seed": cfg.seed,
            "epochs": self.completed_epochs,
            "population": cfg.optimizer.population,
            "baseline_value": self.baseline.baseline_value,
            "best_reward": self.best_reward,
            "best_epoch": self.best_epoch,
            "best_parameters": self.best_action.as_dict() if self.best_action else None,
            "first_epoch_median_above_baseline": self.first_median_epoch,
            "first_epoch_p25_above_baseline": self.first_p25_epoch,
            "final_epoch": self.history[-1] if self.history else None,
            "files": [
                EPOCHS_FILE,
                STEPS_FILE,
                EVOLUTION_FILE,
                BASELINE_FILE,
                BEST_FILE,
            ],
        }


def _start_search_files(output_dir):
    for name, columns in SEARCH_FILES.items():
        with open(output_dir / name, "w", newline="", encoding="utf-8") as handle:
            csv.writer(handle).writerow(columns)


def _append_rows(path, rows):
    with open(path, "a", newline="", encoding="utf-8") as handle:
        csv.writer(handle).writerows(rows)


def _append_epoch(output_dir, stats, baseline):
    _append_rows(
        output_dir / EPOCHS_FILE,
        [
            [
                stats.epoch,
                _fmt(stats.p25),
                _fmt(stats.median),
                _fmt(stats.mean),
                _fmt(stats.p75),
                _fmt(stats.baseline),
                _fmt(stats.best_reward),
                stats.constraint_failures,
                stats.best_action.to_json(),
            ]
        ],
    )
    _append_rows(
        output_dir / STEPS_FILE,
        [
            [
                stats.epoch,
                step.index,
                step.origin,
                step.result.session_seed,
                int(step.result.constraint_ok),
                step.result.retries_used,
                _fmt(step.result.reward),
                *(_fmt(step.result.kpis.as_dict()[name]) for name in KPI_NAMES),
                step.action.to_json(),
            ]
            for step in stats.steps
        ],
    )
    population_kpis = [step.result.kpis.as_dict() for step in stats.steps]
    baseline_kpis = baseline.best_kpis.as_dict()
    row = [stats.epoch]
    for name in EVOLUTION_KPIS:
        total = sum(kpis[name] for kpis in population_kpis)
        row.append(_fmt(total / len(population_kpis)))
        row.append(_fmt(baseline_kpis[name]))
    _append_rows(output_dir / EVOLUTION_FILE, [row])


def _file_sizes(output_dir):
    return {name: (output_dir / name).stat().st_size for name in SEARCH_FILES}


def _truncate_search_files(output_dir, sizes):
    """Отрезает строки, дописанные после последнего чекпоинта."""
    for name, size in sizes.items():
        path = output_dir / name
        if path.stat().st_size < size:
            raise ExperimentConfigError(f"{path} короче, чем записано в чекпоинте")
        with open(path, "r+b") as handle:
            handle.truncate(size)


def save_checkpoint(cfg, dist, shared_state, report):
    _write_json(
        cfg.output_dir / CHECKPOINT_FILE,
        {
            "version": CHECKPOINT_VERSION,
            "config": cfg.document,
            "distribution": dist.to_dict(),
            "shared_state": [float(value) for value in shared_state],
            "baseline": report.baseline.to_dict(),
            "report": report.to_dict(),
            "file_sizes": _file_sizes(cfg.output_dir),
        },
    )


def load_checkpoint(path):
    path = Path(path)
    try:
        checkpoint = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ExperimentConfigError(
            f"Не удалось прочитать чекпоинт {path}: {exc}"
        ) from exc
    if checkpoint.get("version") != CHECKPOINT_VERSION:
        raise ExperimentConfigError(
            f"Неподдерживаемая версия чекпоинта: {checkpoint.get('version')}"
        )
    return checkpoint


def register_run(cfg):
    return ExperimentRun.objects.create(
        name=cfg.name,
        seed=cfg.seed,
        config=cfg.document,
        output_dir=str(cfg.output_dir),
    )


def find_run(cfg):
    """Запись реестра для каталога результатов; создаётся, если её нет."""
    run = ExperimentRun.objects.filter(output_dir=str(cfg.output_dir)).first()
    return run or register_run(cfg)


def _set_status(run, status, **fields):
    if run is None:
        return
    run.status = status
    for name, value in fields.items():
        setattr(run, name, value)
    run.save()


def _record_epoch(run, stats):
    if run is None:
        return
    EpochResult.objects.update_or_create(
        run=run,
        epoch=stats.epoch,
        defaults={
            "p25": stats.p25,
            "median": stats.median,
            "mean": stats.mean,
            "p75": stats.p75,
            "baseline": stats.baseline,
            "best_reward": stats.best_reward,
            "best_action": stats.best_action.as_dict(),
        },
    )


def _search(cfg, env, dist, report, workers, stop_after_epoch, run):
    optimizer = cfg.optimizer
    _set_status(run, RunStatus.RUNNING, baseline_value=report.baseline.baseline_value)
    while not report.finished:
        if stop_after_epoch is not None and report.completed_epochs >= stop_after_epoch:
            logger.info("Остановка после эпохи %s по запросу", report.completed_epochs)
            return report
        dist, stats = run_epoch(
            env,
            dist,
            optimizer.population,
            seed=cfg.seed,
            elite_frac=optimizer.elite_frac,
            stddev_floor=optimizer.stddev_floor,
            seeding=optimizer.seeding,
            shape=optimizer.policy,
            baseline=report.baseline.baseline_value,
            workers=workers,
        )
        report.record(stats)
        _append_epoch(cfg.output_dir, stats, report.baseline)
        _record_epoch(run, stats)
        save_checkpoint(cfg, dist, env.shared_state, report)

    _write_json(
        cfg.output_dir / BEST_FILE,
        {
            "reward": report.best_reward,
            "epoch": report.best_epoch,
            "parameters": report.best_action.as_dict(),
        },
    )
    _write_json(cfg.output_dir / SUMMARY_FILE, report.summary(cfg))
    _set_status(run, RunStatus.FINISHED)
    logger.info(
        "Эксперимент %s завершён: лучшая награда %.4f, базовая линия %.4f",
        cfg.name,
        report.best_reward,
        report.baseline.baseline_value,
    )
    return report


def run_experiment(cfg, workers=1, stop_after_epoch=None, registry=False):
    """
    Базовая линия, затем цикл CEM на cfg.optimizer.epochs эпох.
    После каждой эпохи пишется чекпоинт; stop_after_epoch прерывает
    поиск после заданного числа эпох (прогон можно возобновить).
    registry=True ведёт запись о запуске в базе данных.
    """
    run = find_run(cfg) if registry else None
    if run is not None:
        run.epochs.all().delete()
    output_dir = cfg.output_dir
    output_dir.mkdir(parents=True, exist_ok=True)
    _write_json(output_dir / CONFIG_FILE, cfg.document)
    try:
        _set_status(run, RunStatus.BASELINE)
        baseline = run_baseline(cfg, workers)
        write_baseline_csv(baseline, output_dir / BASELINE_FILE)

        env = SchedulerEnv(cfg.env)
        env.reset()
        dist = init_distribution(cfg.optimizer.policy, cfg.seed)
        report = ExperimentReport(
            output_dir=output_dir, baseline=baseline, epochs_total=cfg.optimizer.epochs
        )
        _start_search_files(output_dir)
        save_checkpoint(cfg, dist, env.shared_state, report)
        return _search(cfg, env, dist, report, workers, stop_after_epoch, run)
    except Exception:
        _set_status(run, RunStatus.FAILED)
        raise


def resume_experiment(
    checkpoint_path, workers=1, stop_after_epoch=None, registry=False
):
    """Продолжает прогон с последней завершённой эпохи чекпоинта."""
    checkpoint_path = Path(checkpoint_path)
    checkpoint = load_checkpoint(checkpoint_path)
    output_dir = checkpoint_path.parent
    document = dict(checkpoint["config"])
    document["output_dir"] = str(output_dir)
    cfg = build_config(document)
    run = find_run(cfg) if registry else None

    baseline = BaselineResult.from_dict(checkpoint["baseline"])
    report = ExperimentReport.from_dict(checkpoint["report"], output_dir, baseline)
    dist = SearchDistribution.from_dict(checkpoint["distribution"])
    env = SchedulerEnv(cfg.env)
    env.publish_state(checkpoint["shared_state"])
    _truncate_search_files(output_dir, checkpoint["file_sizes"])
    logger.warning(
        "Возобновление %s: завершено эпох %s из %s",
        cfg.name,
        report.completed_epochs,
        report.epochs_total,
    )
    try:
        return _search(cfg, env, dist, report, workers, stop_after_epoch, run)
    except Exception:
        _set_status(run, RunStatus.FAILED)
        raise


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def _write_dat(path, columns, rows):
    lines = ["# " + " ".join(columns)]
    lines.extend(" ".join(row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_plot_data(report_path):
    """
    Файлы для gnuplot (через пробел): награды по эпохам, награда и KPI
    каждого шага, по одному файлу на KPI популяции.
    report_path - каталог результатов или файл в нём.
    """
    report_path = Path(report_path)
    output_dir = report_path if report_path.is_dir() else report_path.parent
    try:
        epochs = _read_rows(output_dir / EPOCHS_FILE)
        steps = _read_rows(output_dir / STEPS_FILE)
        evolution = _read_rows(output_dir / EVOLUTION_FILE)
    except OSError as exc:
        raise ExperimentConfigError(
            f"Нет результатов эксперимента в {output_dir}: {exc}"
        ) from exc

    plot_dir = output_dir / PLOT_DIR
    plot_dir.mkdir(exist_ok=True)
    reward_columns = ("epoch", "p25", "median", "mean", "p75", "baseline")
    written = [plot_dir / REWARDS_PLOT_FILE, plot_dir / STEPS_PLOT_FILE]
    _write_dat(
        written[0], reward_columns, [[row[c] for c in reward_columns] for row in epochs]
    )
    step_columns = ("epoch", "index", "reward", *KPI_NAMES)
    _write_dat(
        written[1], step_columns, [[row[c] for c in step_columns] for row in steps]
    )
    for name in EVOLUTION_KPIS:
        path = plot_dir / f"{name}.dat"
        _write_dat(
            path,
            ("epoch", "population", "baseline"),
            [[row["epoch"], row[name], row[f"{name}_baseline"]] for row in evolution],
        )
        written.append(path)
    return written
