"""Command-line behavior: outputs, flows, and exit codes."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
import yaml

from streamrank.cli import EXIT_DIVERGED, EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main

from reference_data import DATASETS, MODELS, MSE_GRID


def tiny_config(tmp_path: Path, **extra) -> Path:
    raw = {
        "name": "tinyrun",
        "protocol": {"n_folds": 3, "k_batches": 4, "seeds": [0, 1], "scaling": "none"},
        "output": {"directory": str(tmp_path / "out")},
        "datasets": [
            {
                "name": "A",
                "batch_size": 5,
                "synthetic": {"n_points": 120, "n_dims": 2, "noise_sigma": 1.0, "seed": 7},
            },
            {
                "name": "B",
                "batch_size": 5,
                "synthetic": {"n_points": 120, "n_dims": 3, "noise_sigma": 2.0, "seed": 8},
            },
            {
                "name": "C",
                "batch_size": 5,
                "synthetic": {"n_points": 150, "n_dims": 2, "noise_sigma": 0.5, "seed": 9},
            },
        ],
        "learners": [
            {"algorithm": "sgd", "eta": 0.05},
            {"algorithm": "lms", "eta": 0.05},
            {"algorithm": "rls"},
            {"algorithm": "olr_wa"},
        ],
    }
    raw.update(extra)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(raw), encoding="utf-8")
    return path


def reference_scores_csv(tmp_path: Path) -> Path:
    lines = ["model," + ",".join(DATASETS)]
    for i, model in enumerate(MODELS):
        lines.append(model + "," + ",".join(repr(float(v)) for v in MSE_GRID[i]))
    path = tmp_path / "scores.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestGenerateData:
    def test_ds1_shape(self, tmp_path, capsys):
        out = tmp_path / "ds1.csv"
        code = main(["generate-data", "--spec", "ds1", "--out", str(out)])
        assert code == EXIT_OK
        lines = out.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 1001  # header + 1000 rows
        assert lines[0] == "x1,x2,x3,y"
        assert all(len(line.split(",")) == 4 for line in lines)
        assert "1000 rows x 4 columns" in capsys.readouterr().out

    def test_seed_override_changes_data(self, tmp_path):
        a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
        main(["generate-data", "--spec", "ds1", "--out", str(a)])
        main(["generate-data", "--spec", "ds1", "--out", str(b), "--seed", "99"])
        main(["generate-data", "--spec", "ds1", "--out", str(c), "--seed", "99"])
        assert a.read_bytes() != b.read_bytes()
        assert b.read_bytes() == c.read_bytes()

    def test_unknown_spec(self, tmp_path, capsys):
        code = main(["generate-data", "--spec", "ds99", "--out", str(tmp_path / "x.csv")])
        assert code == EXIT_INVALID
        assert "unknown synthetic spec" in capsys.readouterr().err


class TestRunCommand:
    def test_run_writes_archive(self, tmp_path, capsys):
        config = tiny_config(tmp_path)
        code = main(["run", "--config", str(config)])
        assert code == EXIT_OK
        archive_path = tmp_path / "out" / "tinyrun.archive.json"
        assert archive_path.exists()
        assert str(archive_path) in capsys.readouterr().out
        payload = json.loads(archive_path.read_text(encoding="utf-8"))
        assert payload["config"]["name"] == "tinyrun"

    def test_run_then_report_equals_run_with_report(self, tmp_path):
        config = tiny_config(tmp_path)
        one_step = tmp_path / "one_step"
        assert main(["run", "--config", str(config), "--report", "--out", str(one_step)]) == EXIT_OK
        archive_path = tmp_path / "out" / "tinyrun.archive.json"
        two_step = tmp_path / "two_step"
        assert main(["report", "--archive", str(archive_path), "--out", str(two_step)]) == EXIT_OK
        names = sorted(p.name for p in one_step.iterdir())
        assert names == sorted(p.name for p in two_step.iterdir())
        assert names  # non-empty bundle
        for name in names:
            assert (one_step / name).read_bytes() == (two_step / name).read_bytes(), name

    def test_report_default_directory_matches_run_report(self, tmp_path):
        config = tiny_config(tmp_path)
        assert main(["run", "--config", str(config), "--report"]) == EXIT_OK
        default_dir = tmp_path / "out" / "tinyrun_report"
        assert (default_dir / "report.md").exists()
        baseline = (default_dir / "report.md").read_bytes()
        archive_path = tmp_path / "out" / "tinyrun.archive.json"
        assert main(["report", "--archive", str(archive_path)]) == EXIT_OK
        assert (default_dir / "report.md").read_bytes() == baseline

    def test_config_and_preset_mutually_exclusive(self, tmp_path, capsys):
        config = tiny_config(tmp_path)
        code = main(["run", "--config", str(config), "--preset", "synthetic_benchmark"])
        assert code == EXIT_INVALID
        assert "exactly one" in capsys.readouterr().err
        assert main(["run"]) == EXIT_INVALID

    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["run", "--config", str(tmp_path / "absent.yaml")])
        assert code == EXIT_INVALID
        assert "not found" in capsys.readouterr().err

    def test_invalid_config_exits_1(self, tmp_path, capsys):
        config = tiny_config(tmp_path)
        raw = yaml.safe_load(config.read_text(encoding="utf-8"))
        raw["learners"] = raw["learners"][:1]
        config.write_text(yaml.safe_dump(raw), encoding="utf-8")
        code = main(["run", "--config", str(config)])
        assert code == EXIT_INVALID
        assert "at least 2 learners" in capsys.readouterr().err

    def test_infeasible_protocol_exits_2(self, tmp_path, capsys):
        config = tiny_config(tmp_path)
        raw = yaml.safe_load(config.read_text(encoding="utf-8"))
        raw["protocol"]["k_batches"] = 1000
        config.write_text(yaml.safe_dump(raw), encoding="utf-8")
        code = main(["run", "--config", str(config)])
        assert code == EXIT_RUNTIME
        assert "[data]" in capsys.readouterr().err

    def test_divergent_learner_exits_3_with_partial_archive(self, tmp_path, capsys):
        config = tiny_config(tmp_path)
        raw = yaml.safe_load(config.read_text(encoding="utf-8"))
        # blows up on dataset A only; B and C still produce a usable ranking
        raw["learners"][0]["overrides"] = {"A": {"eta": 1.0e9}}
        config.write_text(yaml.safe_dump(raw), encoding="utf-8")
        code = main(["run", "--config", str(config)])
        captured = capsys.readouterr()
        assert code == EXIT_DIVERGED
        assert "diverged" in captured.err
        archive_path = tmp_path / "out" / "tinyrun.archive.json"
        payload = json.loads(archive_path.read_text(encoding="utf-8"))
        assert payload["score_matrix"]["scores"][0][0] is None
        assert bool(payload["score_matrix"]["diverged"][0][0]) is True
        # the ranking kept only the clean dataset columns
        assert payload["ranking"]["dataset_names"] == ["B", "C"]


class TestStatsCommand:
    def test_reference_grid_statistics(self, tmp_path, capsys):
        scores = reference_scores_csv(tmp_path)
        code = main(["stats", "--scores", str(scores), "--alpha", "0.05", "--alpha", "0.1"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "models: 8, datasets: 8" in out
        assert "average rank olr_wa: 1.25" in out
        assert "chi2 = 29.2083" in out
        assert "F = 7.6314 (df1=7, df2=49)" in out
        assert "CD(alpha=0.05) = 3.7122" in out
        assert "CD(alpha=0.1) = 3.4048" in out
        assert "alpha=0.05: critical value" in out and "-> reject" in out
        assert "mbgd vs olr_wa: diff=6.375 -> significant at alpha=0.05, alpha=0.1" in out
        assert "rls vs olr_wa: diff=3.625 -> significant at alpha=0.1" in out
        assert "sgd vs orr: diff=0.125 -> not significant" in out
        # all pairs present
        assert out.count(" vs ") == 8 * 7 // 2

    def test_table_mode_critical_value(self, tmp_path, capsys):
        scores = reference_scores_csv(tmp_path)
        code = main(["stats", "--scores", str(scores), "--alpha", "0.05", "--critical-mode", "table"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "critical value 2.2119 (table) -> reject" in out

    def test_table_mode_rejects_other_alpha(self, tmp_path, capsys):
        scores = reference_scores_csv(tmp_path)
        code = main(["stats", "--scores", str(scores), "--alpha", "0.1", "--critical-mode", "table"])
        assert code == EXIT_INVALID
        assert "error:" in capsys.readouterr().err

    def test_diverged_cells_dropped_and_exit_3(self, tmp_path, capsys):
        path = tmp_path / "scores.csv"
        path.write_text(
            "model,d1,d2\nm1,1.0,2.0\nm2,diverged,1.0\nm3,3.0,4.0\n", encoding="utf-8"
        )
        code = main(["stats", "--scores", str(path)])
        captured = capsys.readouterr()
        assert code == EXIT_DIVERGED
        assert "dropping dataset column" in captured.err
        assert "models: 3, datasets: 1" in captured.out

    def test_missing_scores_file_is_usage_error(self, tmp_path, capsys):
        code = main(["stats", "--scores", str(tmp_path / "nope.csv")])
        assert code == EXIT_INVALID
        assert "does not exist" in capsys.readouterr().err


class TestDiagramCommand:
    @pytest.fixture()
    def archive_path(self, tmp_path) -> Path:
        config = tiny_config(tmp_path)
        assert main(["run", "--config", str(config)]) == EXIT_OK
        return tmp_path / "out" / "tinyrun.archive.json"

    def test_writes_svg(self, tmp_path, archive_path, capsys):
        out = tmp_path / "cd.svg"
        code = main(["diagram", "--archive", str(archive_path), "--alpha", "0.1", "--out", str(out)])
        assert code == EXIT_OK
        content = out.read_text(encoding="utf-8")
        assert "<svg" in content
        assert "OLR-WA" in content

    def test_alpha_not_stored(self, tmp_path, archive_path, capsys):
        code = main(["diagram", "--archive", str(archive_path), "--alpha", "0.25"])
        assert code == EXIT_INVALID
        assert "not in archive" in capsys.readouterr().err


class TestTopLevel:
    def test_version(self, capsys):
        assert main(["--version"]) == EXIT_OK
        assert "streamrank" in capsys.readouterr().out

    def test_help(self, capsys):
        assert main(["--help"]) == EXIT_OK
        out = capsys.readouterr().out
        for command in ("generate-data", "run", "stats", "report", "diagram"):
            assert command in out

    def test_unknown_command(self, capsys):
        assert main(["frobnicate"]) == EXIT_INVALID

    def test_tampered_archive_is_runtime_error(self, tmp_path, capsys):
        config = tiny_config(tmp_path)
        assert main(["run", "--config", str(config)]) == EXIT_OK
        archive_path = tmp_path / "out" / "tinyrun.archive.json"
        payload = json.loads(archive_path.read_text(encoding="utf-8"))
        payload["score_matrix"]["scores"][0][0] = 12345.0
        archive_path.write_text(json.dumps(payload), encoding="utf-8")
        code = main(["report", "--archive", str(archive_path), "--out", str(tmp_path / "rep")])
        assert code == EXIT_RUNTIME
        assert "does not match" in capsys.readouterr().err
