import csv
import json
import os
import tempfile
from io import StringIO
from pathlib import Path
from unittest import skipUnless

import numpy as np
from django.conf import settings
from django.core.management import CommandError, call_command
from django.test import SimpleTestCase, TestCase

from actions.space import SME_BASELINE
from kpi.features import build_schema
from kpi.objective import DEFAULT_OBJECTIVE
from kpi.summary import KPI_NAMES
from optimizer.environment import SchedulerEnv
from scheduler.scenario import read_scenario_document

from .models import EpochResult, ExperimentRun, RunStatus
from .services import (BASELINE_FILE, BEST_FILE, CHECKPOINT_FILE, EPOCHS_FILE,
                       EVOLUTION_FILE, EVOLUTION_KPIS, PLOT_DIR,
                       REWARDS_PLOT_FILE, STEP_COLUMNS, STEPS_FILE,
                       STEPS_PLOT_FILE, SUMMARY_FILE, BaselineInfeasibleError,
                       ExperimentConfigError, build_config, emit_plot_data,
                       load_checkpoint, load_config, resume_experiment,
                       run_baseline, run_experiment)

RUN_SLOW_TESTS = bool(os.getenv("RUN_SLOW_TESTS"))
CONFIG_DIR = Path(__file__).resolve().parent / "configs"
SEARCH_OUTPUTS = (
    EPOCHS_FILE,
    STEPS_FILE,
    EVOLUTION_FILE,
    BASELINE_FILE,
    BEST_FILE,
    SUMMARY_FILE,
)
RESCORE_SEED_OFFSET = 2 * 10**9
INFEASIBLE_ENV = {
    "session_duration_s": 1.0,
    "x_seconds": 2,
    "max_constraint_retries": 0,
}


def toy_document(**overrides):
    """Маленький эксперимент: сессии по 1 с, 3 эпохи по 3 кандидата."""
    document = {
        "name": "toy",
        "seed": 3,
        "env": {
            "session_duration_s": 1.0,
            "x_seconds": 1,
            "y_seconds": 0,
            "max_constraint_retries": 1,
        },
        "optimizer": {"population": 3, "epochs": 3},
        "baseline": {"n_sessions": 2},
    }
    document.update(overrides)
    return document


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def read_json(path):
    return json.loads(path.read_text(encoding="utf-8"))


def read_dat(path):
    """Заголовок (без '#') и строки файла для gnuplot."""
    lines = path.read_text(encoding="utf-8").splitlines()
    return lines[0].lstrip("#").split(), [line.split() for line in lines[1:]]


class TempDirMixin:
    def make_dir(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        return Path(tmp.name)

    def write_config(self, document, directory=None):
        directory = directory or self.make_dir()
        path = directory / "config.json"
        path.write_text(json.dumps(document), encoding="utf-8")
        return path


class ConfigTestCase(TempDirMixin, SimpleTestCase):
    """
    Тесты загрузки и проверки конфигурации эксперимента.
    """

    def test_defaults(self):
        cfg = build_config({"name": "defaults"})
        self.assertEqual(cfg.optimizer.population, 50)
        self.assertEqual(cfg.optimizer.epochs, 150)
        self.assertEqual(cfg.optimizer.elite_frac, 0.2)
        self.assertEqual(cfg.optimizer.policy.weight_count, 5178)
        self.assertEqual(cfg.baseline.n_sessions, 50)
        self.assertEqual(cfg.baseline.parameters, SME_BASELINE)
        self.assertEqual(cfg.env.objective, DEFAULT_OBJECTIVE)
        self.assertEqual(cfg.env.x_seconds, 5)
        expected_dir = Path(settings.EXPERIMENT_OUTPUT_DIR) / "defaults"
        self.assertEqual(cfg.output_dir, expected_dir)

    def test_shipped_configs_are_valid(self):
        for name in ("desk.json", "field.json"):
            with self.subTest(config=name):
                cfg = load_config(CONFIG_DIR / name, output_dir=self.make_dir())
                self.assertEqual(len(cfg.env.scenario.ues), 3)
        desk = load_config(CONFIG_DIR / "desk.json", output_dir=self.make_dir())
        self.assertEqual(desk.optimizer.population, 20)
        self.assertEqual(desk.optimizer.epochs, 60)
        self.assertEqual(desk.env.session_duration_s, 10.0)

    def test_overrides(self):
        output_dir = self.make_dir() / "out"
        path = self.write_config(toy_document())
        cfg = load_config(path, seed=11, output_dir=output_dir)
        self.assertEqual(cfg.seed, 11)
        self.assertEqual(cfg.env.base_seed, 11)
        self.assertEqual(cfg.output_dir, output_dir)

    def test_zero_epochs_rejected(self):
        with self.assertRaises(ExperimentConfigError) as ctx:
            build_config(toy_document(optimizer={"epochs": 0}))
        self.assertIn("optimizer", ctx.exception.detail)

    def test_elite_frac_override(self):
        cfg = build_config(toy_document(optimizer={"elite_frac": 0.5}))
        self.assertEqual(cfg.optimizer.elite_frac, 0.5)
        with self.assertRaises(ExperimentConfigError):
            build_config(toy_document(optimizer={"elite_frac": 0.0}))

    def test_population_of_one_rejected(self):
        with self.assertRaises(ExperimentConfigError):
            build_config(toy_document(optimizer={"population": 1}))

    def test_bad_objective_weights(self):
        unit = {"lo": 0, "hi": 1}
        entries = [
            {"kpi_name": "dl_ack_ratio", "weight": 0.5, "normalization": unit},
            {"kpi_name": "ul_ack_ratio", "weight": 0.4, "normalization": unit},
        ]
        with self.assertRaises(ExperimentConfigError) as ctx:
            build_config(toy_document(objective={"entries": entries}))
        self.assertIn("objective", ctx.exception.detail)

    def test_objective_preset(self):
        preset = {"capacity": 51, "coverage": 0, "quality": 49}
        cfg = build_config(toy_document(objective={"preset": preset}))
        entries = cfg.env.objective.entries
        weights = {entry.kpi_name: entry.weight_hundredths for entry in entries}
        self.assertEqual(weights["dl_mac_throughput_bps"], 22)
        self.assertEqual(weights["dl_rlc_throughput_bps"], 29)

    def test_off_grid_baseline_parameters(self):
        parameters = SME_BASELINE.as_dict()
        parameters["ibler_target"] = 0.105
        with self.assertRaises(ExperimentConfigError):
            build_config(toy_document(baseline={"parameters": parameters}))

    def test_scenario_path_relative_to_config(self):
        directory = self.make_dir()
        scenario = {
            "name": "single",
            "ues": [
                {
                    "ue_id": 0,
                    "coverage_class": "medium",
                    "mean_sinr_db": 12.0,
                    "sinr_stddev_db": 1.0,
                    "traffic_profile": [
                        {
                            "app_kind": "speed_test",
                            "start_s": 0.0,
                            "duration_s": 5.0,
                            "offered_rate_bps": None,
                        }
                    ],
                }
            ],
        }
        (directory / "single.json").write_text(json.dumps(scenario), encoding="utf-8")
        path = self.write_config(toy_document(scenario="single.json"), directory)
        cfg = load_config(path)
        self.assertEqual(cfg.env.scenario.name, "single")
        self.assertEqual(cfg.optimizer.policy.input_dim, len(build_schema(1)))
        self.assertEqual(cfg.document["scenario"]["name"], "single")

    def test_missing_scenario_file(self):
        with self.assertRaises(ExperimentConfigError):
            load_config(self.write_config(toy_document(scenario="missing.json")))

    def test_recommended_ranges(self):
        ranges = {"ibler_target": [0.08, 0.12]}
        cfg = build_config(toy_document(recommended_ranges=ranges))
        spec = {spec.name: spec for spec in cfg.optimizer.seeding.specs}["ibler_target"]
        self.assertEqual(spec.sme_recommended_range, (0.08, 0.12))

    def test_session_shorter_than_bin(self):
        with self.assertRaises(ExperimentConfigError):
            build_config(toy_document(env={"session_duration_s": 0.5}))

    def test_bad_simulator_setting(self):
        scenario = read_scenario_document()
        scenario["simulator"] = {"n_rbs": 0}
        with self.assertRaises(ExperimentConfigError) as ctx:
            build_config(toy_document(scenario=scenario))
        self.assertIn("scenario", ctx.exception.detail)


class BaselineTestCase(SimpleTestCase):
    """
    Тесты базовой линии.
    """

    def test_single_session(self):
        cfg = build_config(toy_document(baseline={"n_sessions": 1}))
        baseline = run_baseline(cfg)
        self.assertEqual(len(baseline.rewards), 1)
        self.assertEqual(baseline.baseline_value, baseline.rewards[0])

    def test_maximum_and_determinism(self):
        cfg = build_config(toy_document(baseline={"n_sessions": 3}))
        first = run_baseline(cfg)
        second = run_baseline(cfg)
        self.assertEqual(first.rewards, second.rewards)
        self.assertEqual(first.kpi_table, second.kpi_table)
        self.assertEqual(first.baseline_value, max(first.rewards))
        self.assertEqual(len(set(first.session_seeds)), 3)

    def test_infeasible(self):
        cfg = build_config(toy_document(env=INFEASIBLE_ENV))
        with self.assertRaises(BaselineInfeasibleError):
            run_baseline(cfg)


class ExperimentTestCase(TempDirMixin, SimpleTestCase):
    """
    Тесты полного цикла: файлы результатов, детерминизм, возобновление.
    """

    def run_toy(self, stop_after_epoch=None, **overrides):
        document = toy_document(output_dir=str(self.make_dir()), **overrides)
        cfg = build_config(document)
        return cfg, run_experiment(cfg, stop_after_epoch=stop_after_epoch)

    def test_outputs(self):
        cfg, report = self.run_toy()
        self.assertTrue(report.finished)
        for name in SEARCH_OUTPUTS + (CHECKPOINT_FILE,):
            self.assertTrue((cfg.output_dir / name).exists(), name)

        epochs = read_rows(cfg.output_dir / EPOCHS_FILE)
        self.assertEqual([row["epoch"] for row in epochs], ["0", "1", "2"])
        for row in epochs:
            self.assertLessEqual(float(row["p25"]), float(row["median"]))
            self.assertLessEqual(float(row["median"]), float(row["p75"]))
            self.assertEqual(float(row["baseline"]), report.baseline.baseline_value)
        steps = read_rows(cfg.output_dir / STEPS_FILE)
        self.assertEqual(len(steps), 9)
        self.assertEqual(tuple(steps[0]), STEP_COLUMNS)
        for row in steps:
            for name in KPI_NAMES:
                self.assertTrue(np.isfinite(float(row[name])), name)
            if row["constraint_ok"] == "1":
                self.assertGreaterEqual(float(row["dl_ack_ratio"]), 0.0)
                self.assertLessEqual(float(row["dl_ack_ratio"]), 1.0)
        evolution = read_rows(cfg.output_dir / EVOLUTION_FILE)
        self.assertEqual(len(evolution), 3)
        for name in EVOLUTION_KPIS:
            self.assertIn(name, evolution[0])
            self.assertIn(f"{name}_baseline", evolution[0])

        summary = read_json(cfg.output_dir / SUMMARY_FILE)
        self.assertEqual(summary["epochs"], 3)
        self.assertEqual(summary["baseline_value"], report.baseline.baseline_value)
        self.assertIn("first_epoch_median_above_baseline", summary)
        self.assertIn("first_epoch_p25_above_baseline", summary)
        best_reward = max(float(row["best_reward"]) for row in epochs)
        self.assertEqual(summary["best_reward"], best_reward)

        best = read_json(cfg.output_dir / BEST_FILE)
        self.assertEqual(best["reward"], report.best_reward)
        self.assertEqual(set(best["parameters"]), set(SME_BASELINE.as_dict()))

    def test_milestones(self):
        _, report = self.run_toy()
        baseline = report.baseline.baseline_value
        medians = [row["median"] for row in report.history]
        reached = [i for i, value in enumerate(medians) if value >= baseline]
        expected = reached[0] if reached else None
        self.assertEqual(report.first_median_epoch, expected)

    def test_plot_data(self):
        cfg, _ = self.run_toy()
        written = emit_plot_data(cfg.output_dir / SUMMARY_FILE)
        plot_dir = cfg.output_dir / PLOT_DIR
        self.assertEqual(len(written), 2 + len(EVOLUTION_KPIS))
        _, rows = read_dat(plot_dir / REWARDS_PLOT_FILE)
        self.assertEqual(len(rows), 3)
        self.assertEqual(len({row[5] for row in rows}), 1)
        for row in rows:
            self.assertLessEqual(float(row[1]), float(row[2]))
        _, kpi_rows = read_dat(plot_dir / "dl_ack_ratio.dat")
        self.assertEqual(len(kpi_rows), 3)

        header, step_rows = read_dat(plot_dir / STEPS_PLOT_FILE)
        self.assertEqual(header, ["epoch", "index", "reward", *KPI_NAMES])
        steps = read_rows(cfg.output_dir / STEPS_FILE)
        self.assertEqual(len(step_rows), len(steps))
        for row, step in zip(step_rows, steps):
            self.assertEqual(row, [step[name] for name in header])

    def test_plot_data_without_results(self):
        with self.assertRaises(ExperimentConfigError):
            emit_plot_data(self.make_dir())

    def test_determinism(self):
        """
        Одинаковые (конфигурация, seed) -> побайтно одинаковые файлы результатов.
        """
        first, _ = self.run_toy()
        second, _ = self.run_toy()
        for name in SEARCH_OUTPUTS:
            self.assertEqual(
                (first.output_dir / name).read_bytes(),
                (second.output_dir / name).read_bytes(),
                name,
            )

    def test_resume_equivalence(self):
        """
        Остановка после эпохи 1, мусор после чекпоинта, возобновление -
        результат совпадает с непрерывным прогоном.
        """
        full, _ = self.run_toy()
        partial, report = self.run_toy(stop_after_epoch=1)
        self.assertFalse(report.finished)
        self.assertFalse((partial.output_dir / SUMMARY_FILE).exists())
        checkpoint = load_checkpoint(partial.output_dir / CHECKPOINT_FILE)
        self.assertEqual(checkpoint["report"]["completed_epochs"], 1)

        with open(partial.output_dir / EPOCHS_FILE, "a", encoding="utf-8") as handle:
            handle.write("1,0.5,0.5")
        # Оборванная строка шага: часть KPI уже дописана.
        kpi_prefix = ",".join("0.5" for _ in KPI_NAMES[:3])
        with open(partial.output_dir / STEPS_FILE, "a", encoding="utf-8") as handle:
            handle.write(f"1,0,sampled,7,1,0,0.5,{kpi_prefix}")

        resumed = resume_experiment(partial.output_dir / CHECKPOINT_FILE)
        self.assertTrue(resumed.finished)
        for name in SEARCH_OUTPUTS:
            self.assertEqual(
                (full.output_dir / name).read_bytes(),
                (partial.output_dir / name).read_bytes(),
                name,
            )
        steps = read_rows(partial.output_dir / STEPS_FILE)
        self.assertEqual(len(steps), 9)
        full_steps = read_rows(full.output_dir / STEPS_FILE)
        for row, expected in zip(steps, full_steps):
            for name in KPI_NAMES:
                self.assertEqual(row[name], expected[name])

    def test_unsupported_checkpoint(self):
        path = self.make_dir() / CHECKPOINT_FILE
        for version in (1, 99):
            with self.subTest(version=version):
                path.write_text(json.dumps({"version": version}), encoding="utf-8")
                with self.assertRaises(ExperimentConfigError):
                    resume_experiment(path)

    @skipUnless(RUN_SLOW_TESTS, "долгий тест: RUN_SLOW_TESTS=1")
    def test_desk_config_beats_baseline(self):
        """
        Настольная конфигурация: медиана эпохи достигает базовой линии
        к эпохе 50 хотя бы в 8 из 10 seed. Лучшие параметры на 20 новых
        сессиях в среднем не хуже базовой линии больше чем на 0.02.
        """
        reached = 0
        for seed in range(10):
            cfg = load_config(
                CONFIG_DIR / "desk.json", seed=seed, output_dir=self.make_dir()
            )
            report = run_experiment(cfg, workers=settings.EXPERIMENT_WORKERS)
            first = report.first_median_epoch
            if first is not None and first <= 50:
                reached += 1

            env = SchedulerEnv(cfg.env)
            rewards = [
                env.step(report.best_action, RESCORE_SEED_OFFSET + session).reward
                for session in range(20)
            ]
            with self.subTest(seed=seed):
                self.assertGreaterEqual(
                    float(np.mean(rewards)), report.baseline.baseline_value - 0.02
                )
        self.assertGreaterEqual(reached, 8)


class CommandTestCase(TempDirMixin, TestCase):
    """
    Тесты команд manage.py и реестра запусков.
    """

    def assert_exit_code(self, code, *args):
        with self.assertRaises(CommandError) as ctx:
            call_command(*args, stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, code)

    def test_validate(self):
        schema_path = self.make_dir() / "schema.json"
        out = StringIO()
        call_command(
            "validate",
            str(CONFIG_DIR / "desk.json"),
            "--feature-schema",
            str(schema_path),
            stdout=out,
        )
        self.assertIn("корректна", out.getvalue())
        self.assertEqual(read_json(schema_path)["length"], 312)

    def test_config_error_code(self):
        path = self.write_config(toy_document(optimizer={"epochs": 0}))
        self.assert_exit_code(2, "validate", str(path))

    def test_bad_simulator_setting_code(self):
        scenario = read_scenario_document()
        scenario["simulator"] = {"tdd_pattern": "UUUU"}
        path = self.write_config(toy_document(scenario=scenario))
        self.assert_exit_code(2, "validate", str(path))

    def test_infeasible_code(self):
        path = self.write_config(toy_document(env=INFEASIBLE_ENV))
        output_dir = str(self.make_dir())
        self.assert_exit_code(
            3, "baseline", str(path), "--workers", "1", "--output-dir", output_dir
        )

    def test_baseline(self):
        output_dir = self.make_dir()
        path = self.write_config(toy_document())
        call_command(
            "baseline",
            str(path),
            "--workers",
            "1",
            "--output-dir",
            str(output_dir),
            stdout=StringIO(),
        )
        self.assertEqual(len(read_rows(output_dir / BASELINE_FILE)), 2)

    def test_run_resume_and_plotdata(self):
        output_dir = self.make_dir()
        path = self.write_config(toy_document())
        call_command(
            "run",
            str(path),
            "--workers",
            "1",
            "--output-dir",
            str(output_dir),
            "--stop-after-epoch",
            "2",
            stdout=StringIO(),
        )
        run = ExperimentRun.objects.get(output_dir=str(output_dir))
        self.assertEqual(run.status, RunStatus.RUNNING)
        self.assertEqual(run.epochs.count(), 2)

        checkpoint = str(output_dir / CHECKPOINT_FILE)
        call_command("resume", checkpoint, "--workers", "1", stdout=StringIO())
        run.refresh_from_db()
        self.assertEqual(run.status, RunStatus.FINISHED)
        self.assertIsNotNone(run.baseline_value)
        self.assertEqual(EpochResult.objects.filter(run=run).count(), 3)
        self.assertEqual(ExperimentRun.objects.count(), 1)

        call_command("plotdata", str(output_dir), stdout=StringIO())
        self.assertTrue((output_dir / PLOT_DIR / REWARDS_PLOT_FILE).exists())
        self.assertTrue((output_dir / PLOT_DIR / STEPS_PLOT_FILE).exists())

    def test_trace(self):
        output_dir = self.make_dir()
        call_command(
            "trace",
            "default",
            "--duration",
            "1",
            "--output-dir",
            str(output_dir),
            stdout=StringIO(),
        )
        self.assertEqual(len(read_rows(output_dir / "trace.csv")), 2000)
        self.assertEqual(len(read_rows(output_dir / "bins.csv")), 1)

    def test_trace_bad_parameters(self):
        path = self.make_dir() / "params.json"
        path.write_text(json.dumps({"ibler_target": 0.1}), encoding="utf-8")
        self.assert_exit_code(
            2, "trace", "default", str(path), "--duration", "1"
        )
