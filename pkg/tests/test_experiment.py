"""Config parsing, the full run pipeline, and archive round-tripping."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
import pytest
import yaml

from streamrank.errors import (
    ArchiveIntegrityError,
    StageError,
    ValidationError,
)
from streamrank.experiment import (
    DatasetConfig,
    LearnerEntry,
    ResultsArchive,
    RunConfig,
    load_archive,
    load_preset,
    preset_names,
    run_experiment,
    verify_integrity,
    write_archive,
)


def small_config(tmp_path: Path, **protocol_overrides) -> RunConfig:
    raw = {
        "name": "unit",
        "protocol": {"n_folds": 3, "k_batches": 4, "seeds": [0, 1], "scaling": "none"},
        "stats": {"alphas": [0.05, 0.1], "critical_mode": "exact"},
        "output": {"directory": str(tmp_path)},
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
    raw["protocol"].update(protocol_overrides)
    return RunConfig.from_dict(raw)


class TestConfigParsing:
    def test_yaml_round_trip(self, tmp_path):
        config = small_config(tmp_path)
        path = tmp_path / "config.yaml"
        path.write_text(yaml.safe_dump(config.to_dict()), encoding="utf-8")
        reloaded = RunConfig.from_yaml(path)
        assert reloaded.to_dict() == config.to_dict()

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ValidationError, match="not found"):
            RunConfig.from_yaml(tmp_path / "nope.yaml")

    def test_non_mapping_config_file(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("- just\n- a\n- list\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="mapping"):
            RunConfig.from_yaml(path)

    def test_lambda_alias_maps_to_lam(self):
        entry = LearnerEntry.from_dict({"algorithm": "orr", "lambda": 0.25})
        assert entry.params == {"lam": 0.25}
        assert entry.config_for("any").lam == 0.25
        assert entry.to_dict()["lambda"] == 0.25

    def test_unknown_hyperparameter_rejected(self):
        with pytest.raises(ValidationError, match="unknown hyperparameter"):
            LearnerEntry.from_dict({"algorithm": "sgd", "momentum": 0.9})

    def test_per_dataset_override_merges_over_base(self):
        entry = LearnerEntry.from_dict(
            {"algorithm": "sgd", "eta": 0.01, "overrides": {"big": {"eta": 0.001}}}
        )
        assert entry.config_for("small").eta == 0.01
        assert entry.config_for("big").eta == 0.001
        assert entry.config_for("big").epochs_multiplier == entry.config_for("small").epochs_multiplier

    def test_dataset_needs_exactly_one_source(self):
        with pytest.raises(ValidationError, match="exactly one"):
            DatasetConfig.from_dict({"name": "X", "batch_size": 5})
        with pytest.raises(ValidationError, match="exactly one"):
            DatasetConfig.from_dict(
                {
                    "name": "X",
                    "batch_size": 5,
                    "csv": "x.csv",
                    "synthetic": {"n_points": 10, "n_dims": 1, "noise_sigma": 0.1},
                }
            )

    def test_synthetic_spec_unknown_key_rejected(self):
        with pytest.raises(ValidationError, match="unknown synthetic keys"):
            DatasetConfig.from_dict(
                {
                    "name": "X",
                    "batch_size": 5,
                    "synthetic": {"n_points": 10, "n_dims": 1, "noise_sigma": 0.1, "bogus": 1},
                }
            )


class TestConfigValidation:
    def test_requires_two_learners(self, tmp_path):
        config = small_config(tmp_path)
        config.learners = config.learners[:1]
        with pytest.raises(ValidationError, match="at least 2 learners"):
            config.validate()

    def test_requires_a_dataset(self, tmp_path):
        config = small_config(tmp_path)
        config.datasets = []
        with pytest.raises(ValidationError, match="at least 1 dataset"):
            config.validate()

    def test_duplicate_learner_ids_rejected(self, tmp_path):
        config = small_config(tmp_path)
        config.learners.append(LearnerEntry.from_dict({"algorithm": "sgd"}))
        with pytest.raises(ValidationError, match="duplicate learner ids"):
            config.validate()

    def test_two_variants_of_same_algorithm_need_distinct_ids(self, tmp_path):
        config = small_config(tmp_path)
        config.learners.append(LearnerEntry.from_dict({"id": "sgd_slow", "algorithm": "sgd", "eta": 0.001}))
        config.validate()

    def test_missing_csv_rejected(self, tmp_path):
        config = small_config(tmp_path)
        config.datasets.append(
            DatasetConfig.from_dict({"name": "F", "batch_size": 5, "csv": str(tmp_path / "gone.csv")})
        )
        with pytest.raises(ValidationError, match="file not found"):
            config.validate()

    def test_existing_csv_accepted(self, tmp_path):
        csv = tmp_path / "tiny.csv"
        rows = ["x1,y"] + [f"{i},{2 * i}" for i in range(30)]
        csv.write_text("\n".join(rows) + "\n", encoding="utf-8")
        config = small_config(tmp_path)
        config.datasets.append(DatasetConfig.from_dict({"name": "F", "batch_size": 2, "csv": str(csv)}))
        config.validate()

    def test_bad_alpha_rejected(self, tmp_path):
        config = small_config(tmp_path)
        config.alphas = (0.05, 1.5)
        with pytest.raises(ValidationError, match="alpha"):
            config.validate()

    def test_untabulated_alpha_rejected(self, tmp_path):
        config = small_config(tmp_path)
        config.alphas = (0.01,)
        with pytest.raises(ValidationError):
            config.validate()

    def test_bad_critical_mode_rejected(self, tmp_path):
        config = small_config(tmp_path)
        config.critical_mode = "guess"
        with pytest.raises(ValidationError, match="critical_mode"):
            config.validate()

    def test_invalid_learner_setting_caught_at_validate(self, tmp_path):
        config = small_config(tmp_path)
        config.learners[0].params["eta"] = -1.0
        with pytest.raises(ValidationError):
            config.validate()


class TestRunExperiment:
    def test_full_run_produces_archive(self, tmp_path):
        config = small_config(tmp_path)
        path = tmp_path / "run.json"
        archive = run_experiment(config, archive_path=path)
        assert path.exists()
        assert len(archive.traces) == 4 * 3 * 3 * 2  # learners x datasets x folds x seeds
        assert archive.score_matrix.scores.shape == (4, 3)
        assert not archive.any_divergence
        assert archive.ranking is not None
        assert archive.nemenyi is not None
        assert archive.version
        assert archive.created_at

    def test_default_archive_path_from_output_dir(self, tmp_path):
        config = small_config(tmp_path)
        archive = run_experiment(config)
        assert (tmp_path / "unit.archive.json").exists()
        assert archive.config["output"]["directory"] == str(tmp_path)

    def test_identical_configs_give_byte_identical_scores(self, tmp_path):
        config = small_config(tmp_path)
        a = run_experiment(config, archive_path=tmp_path / "a.json")
        b = run_experiment(config, archive_path=tmp_path / "b.json")
        assert a.score_matrix.canonical_bytes() == b.score_matrix.canonical_bytes()

    def test_config_stage_error_tagged(self, tmp_path):
        config = small_config(tmp_path)
        config.learners = config.learners[:1]
        with pytest.raises(StageError, match=r"\[config\]"):
            run_experiment(config, archive_path=tmp_path / "x.json")

    def test_data_stage_error_tagged(self, tmp_path):
        config = small_config(tmp_path, k_batches=1000)  # far more batches than any fold holds
        with pytest.raises(StageError, match=r"\[data\]"):
            run_experiment(config, archive_path=tmp_path / "x.json")

    def test_minimal_run_archives_with_low_power_warning(self, tmp_path):
        config = small_config(tmp_path)
        config.datasets = config.datasets[:1]
        config.learners = config.learners[:2]
        path = tmp_path / "tiny.json"
        archive = run_experiment(config, archive_path=path)
        assert path.exists()
        assert any("unreliable" in w for w in archive.warnings)
        assert archive.ranking is not None
        # a single tie-free dataset pins chi2 at N(k-1), so the F form is degenerate
        assert archive.friedman == []
        assert any("degenerate" in w for w in archive.warnings)

    def test_archive_json_is_plain_data(self, tmp_path):
        config = small_config(tmp_path)
        path = tmp_path / "run.json"
        run_experiment(config, archive_path=path)
        payload = json.loads(path.read_text(encoding="utf-8"))
        assert set(payload) >= {"config", "traces", "score_matrix", "ranking", "friedman", "nemenyi"}
        assert payload["config"]["protocol"]["seeds"] == [0, 1]

    def test_stats_failure_still_writes_partial_archive(self, tmp_path, monkeypatch):
        import streamrank.experiment as experiment_module

        def boom(*args, **kwargs):
            raise RuntimeError("synthetic stats failure")

        monkeypatch.setattr(experiment_module, "_stats_block", boom)
        config = small_config(tmp_path)
        path = tmp_path / "partial.json"
        with pytest.raises(StageError, match=r"\[stats\]"):
            run_experiment(config, archive_path=path)
        partial = load_archive(path)
        assert partial.ranking is None
        assert partial.friedman == []
        assert len(partial.traces) == 4 * 3 * 3 * 2
        assert any("stats stage failed" in w for w in partial.warnings)
        verify_integrity(partial)  # nothing stored to contradict the scores


class TestArchiveRoundTrip:
    def test_round_trip_and_integrity(self, tmp_path):
        config = small_config(tmp_path)
        path = tmp_path / "run.json"
        archive = run_experiment(config, archive_path=path)
        loaded = load_archive(path)
        verify_integrity(loaded)
        assert loaded.score_matrix.canonical_bytes() == archive.score_matrix.canonical_bytes()
        assert [t.to_dict() for t in loaded.traces] == [t.to_dict() for t in archive.traces]
        assert [f.to_dict() for f in loaded.friedman] == [f.to_dict() for f in archive.friedman]
        assert loaded.nemenyi.to_dict() == archive.nemenyi.to_dict()
        assert np.array_equal(loaded.ranking.ranks, archive.ranking.ranks)

    def test_tampered_scores_fail_integrity(self, tmp_path):
        config = small_config(tmp_path)
        path = tmp_path / "run.json"
        run_experiment(config, archive_path=path)
        payload = json.loads(path.read_text(encoding="utf-8"))
        payload["score_matrix"]["scores"][0][0] *= 10.0
        path.write_text(json.dumps(payload), encoding="utf-8")
        with pytest.raises(ArchiveIntegrityError):
            verify_integrity(load_archive(path))

    def test_tampered_ranking_fails_integrity(self, tmp_path):
        config = small_config(tmp_path)
        path = tmp_path / "run.json"
        run_experiment(config, archive_path=path)
        payload = json.loads(path.read_text(encoding="utf-8"))
        row = payload["ranking"]["ranks"][0]
        payload["ranking"]["ranks"][0] = payload["ranking"]["ranks"][1]
        payload["ranking"]["ranks"][1] = row
        path.write_text(json.dumps(payload), encoding="utf-8")
        with pytest.raises(ArchiveIntegrityError, match="ranking"):
            verify_integrity(load_archive(path))

    def test_corrupt_json_is_an_integrity_error(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ArchiveIntegrityError, match="not valid JSON"):
            load_archive(path)

    def test_missing_section_is_an_integrity_error(self, tmp_path):
        path = tmp_path / "empty.json"
        path.write_text(json.dumps({"config": {}}), encoding="utf-8")
        with pytest.raises(ArchiveIntegrityError, match="traces"):
            load_archive(path)

    def test_missing_archive_file(self, tmp_path):
        with pytest.raises(ValidationError, match="archive not found"):
            load_archive(tmp_path / "nope.json")

    def test_atomic_write_leaves_no_temp_files(self, tmp_path):
        config = small_config(tmp_path)
        path = tmp_path / "run.json"
        archive = run_experiment(config, archive_path=path)
        write_archive(archive, path)  # overwrite in place
        leftovers = [n for n in os.listdir(tmp_path) if n.endswith(".tmp")]
        assert leftovers == []
        verify_integrity(load_archive(path))

    def test_failed_write_preserves_previous_archive(self, tmp_path, monkeypatch):
        config = small_config(tmp_path)
        path = tmp_path / "run.json"
        archive = run_experiment(config, archive_path=path)
        before = path.read_bytes()

        def explode(src, dst):
            raise OSError("disk full")

        monkeypatch.setattr(os, "replace", explode)
        with pytest.raises(OSError):
            write_archive(archive, path)
        monkeypatch.undo()
        assert path.read_bytes() == before
        assert [n for n in os.listdir(tmp_path) if n.endswith(".tmp")] == []


class TestPresets:
    def test_presets_discoverable(self):
        names = preset_names()
        assert "synthetic_benchmark" in names
        assert "real_data_template" in names

    def test_unknown_preset(self):
        with pytest.raises(ValidationError, match="unknown preset"):
            load_preset("does_not_exist")

    def test_synthetic_preset_validates(self):
        config = load_preset("synthetic_benchmark")
        config.validate()
        assert len(config.learners) == 8
        assert [d.name for d in config.datasets] == ["DS1", "DS2", "DS3", "DS4"]
        assert config.seeds == (0, 1, 2)
        assert config.n_folds == 5
        assert config.k_batches == 10
        shapes = {
            d.name: (d.synthetic.n_points, d.synthetic.n_dims, d.batch_size)
            for d in config.datasets
        }
        assert shapes == {
            "DS1": (1000, 3, 10),
            "DS2": (10000, 20, 30),
            "DS3": (10000, 200, 300),
            "DS4": (50000, 500, 1000),
        }

    def test_synthetic_preset_override_plumbing(self):
        config = load_preset("synthetic_benchmark")
        by_id = {entry.id: entry for entry in config.learners}
        assert by_id["sgd"].config_for("DS1").eta == 0.01
        assert by_id["sgd"].config_for("DS4").eta == 0.001
        assert by_id["mbgd"].config_for("DS3").epochs_multiplier == 100
        assert by_id["rls"].config_for("DS2").lam == 0.99

    def test_real_template_requires_files(self):
        config = load_preset("real_data_template")
        with pytest.raises(ValidationError, match="file not found"):
            config.validate()
