"""End-to-end orchestration: parse a run config, execute the evaluation grid,
compute significance statistics, and persist everything as one archive.

The archive is written atomically and is self-verifying: every statistic it
stores can be recomputed from the embedded score grid and must match exactly.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .data import Dataset, SyntheticSpec, generate_synthetic, load_csv
from .errors import (
    ArchiveIntegrityError,
    DegenerateStatisticError,
    StageError,
    ValidationError,
)
from .evaluation import (
    DatasetPlan,
    MseTrace,
    RunPlan,
    ScoreMatrix,
    collect_traces,
    score_matrix_from_traces,
)
from .learners import canonical_algorithm, default_config
from .stats import (
    CRITICAL_MODES,
    FriedmanResult,
    NemenyiResult,
    RankMatrix,
    friedman_test,
    nemenyi_cd,
    nemenyi_test,
    rank_score_matrix,
)

logger = logging.getLogger(__name__)

DEFAULT_ALPHAS = (0.05, 0.1)

# accepted spellings for learner hyperparameters in config files
_PARAM_ALIASES = {
    "lambda": "lam",
    "lam": "lam",
    "eta": "eta",
    "delta": "delta",
    "c": "C",
    "C": "C",
    "epsilon": "epsilon",
    "epochs_multiplier": "epochs_multiplier",
    "w_base": "w_base",
    "w_inc": "w_inc",
}


def _normalize_params(raw: dict, where: str) -> dict:
    params = {}
    for key, value in raw.items():
        if key not in _PARAM_ALIASES:
            raise ValidationError(f"unknown hyperparameter {key!r} in {where}")
        params[_PARAM_ALIASES[key]] = value
    if "epochs_multiplier" in params:
        params["epochs_multiplier"] = int(params["epochs_multiplier"])
    return params


@dataclass
class DatasetConfig:
    """One dataset entry: either a synthetic recipe or a CSV path."""

    name: str
    batch_size: int
    synthetic: SyntheticSpec | None = None
    csv: Path | None = None
    target_column: str | None = None
    scaling: str | None = None  # None -> protocol default

    @classmethod
    def from_dict(cls, raw: dict) -> "DatasetConfig":
        if "name" not in raw:
            raise ValidationError(f"dataset entry missing 'name': {raw}")
        if "batch_size" not in raw:
            raise ValidationError(f"dataset {raw['name']!r} missing 'batch_size'")
        has_synth = "synthetic" in raw
        has_csv = "csv" in raw
        if has_synth == has_csv:
            raise ValidationError(
                f"dataset {raw['name']!r} must declare exactly one of 'synthetic' or 'csv'"
            )
        synthetic = None
        if has_synth:
            s = dict(raw["synthetic"])
            try:
                synthetic = SyntheticSpec(
                    n_points=int(s.pop("n_points")),
                    n_dims=int(s.pop("n_dims")),
                    noise_sigma=float(s.pop("noise_sigma")),
                    coef_range=tuple(s.pop("coef_range", (-10.0, 10.0))),
                    seed=int(s.pop("seed", 0)),
                )
            except KeyError as missing:
                raise ValidationError(
                    f"dataset {raw['name']!r}: synthetic spec missing {missing}"
                ) from None
            if s:
                raise ValidationError(
                    f"dataset {raw['name']!r}: unknown synthetic keys {sorted(s)}"
                )
        return cls(
            name=str(raw["name"]),
            batch_size=int(raw["batch_size"]),
            synthetic=synthetic,
            csv=Path(raw["csv"]) if has_csv else None,
            target_column=raw.get("target_column"),
            scaling=raw.get("scaling"),
        )

    def to_dict(self) -> dict:
        out: dict = {"name": self.name, "batch_size": self.batch_size}
        if self.synthetic is not None:
            out["synthetic"] = self.synthetic.to_dict()
        if self.csv is not None:
            out["csv"] = str(self.csv)
        if self.target_column is not None:
            out["target_column"] = self.target_column
        if self.scaling is not None:
            out["scaling"] = self.scaling
        return out

    def load(self) -> Dataset:
        if self.synthetic is not None:
            return generate_synthetic(self.synthetic, name=self.name)
        return load_csv(self.csv, target_column=self.target_column, name=self.name)


@dataclass
class LearnerEntry:
    """One learner entry: algorithm, shared params, per-dataset overrides."""

    id: str
    algorithm: str
    params: dict = field(default_factory=dict)
    overrides: dict[str, dict] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "LearnerEntry":
        if "algorithm" not in raw:
            raise ValidationError(f"learner entry missing 'algorithm': {raw}")
        algorithm = canonical_algorithm(str(raw["algorithm"]))
        learner_id = str(raw.get("id", algorithm))
        reserved = {"id", "algorithm", "overrides"}
        params = _normalize_params(
            {k: v for k, v in raw.items() if k not in reserved}, f"learner {learner_id!r}"
        )
        overrides = {}
        for dataset_name, override in (raw.get("overrides") or {}).items():
            overrides[str(dataset_name)] = _normalize_params(
                dict(override), f"learner {learner_id!r} override for {dataset_name!r}"
            )
        return cls(id=learner_id, algorithm=algorithm, params=params, overrides=overrides)

    def to_dict(self) -> dict:
        out: dict = {"id": self.id, "algorithm": self.algorithm}
        out.update({("lambda" if k == "lam" else k): v for k, v in self.params.items()})
        if self.overrides:
            out["overrides"] = {
                ds: {("lambda" if k == "lam" else k): v for k, v in ov.items()}
                for ds, ov in self.overrides.items()
            }
        return out

    def config_for(self, dataset_name: str):
        merged = dict(self.params)
        merged.update(self.overrides.get(dataset_name, {}))
        return default_config(self.algorithm, **merged)


@dataclass
class RunConfig:
    """Validated description of a full benchmark run."""

    datasets: list[DatasetConfig]
    learners: list[LearnerEntry]
    n_folds: int = 5
    k_batches: int = 10
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    scaling: str = "none"
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    critical_mode: str = "exact"
    name: str = "run"
    output_dir: Path = Path("results")

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        protocol = dict(raw.get("protocol") or {})
        stats_options = dict(raw.get("stats") or {})
        output = dict(raw.get("output") or {})
        datasets = [DatasetConfig.from_dict(d) for d in raw.get("datasets") or []]
        learners = [LearnerEntry.from_dict(entry) for entry in raw.get("learners") or []]
        return cls(
            datasets=datasets,
            learners=learners,
            n_folds=int(protocol.get("n_folds", 5)),
            k_batches=int(protocol.get("k_batches", 10)),
            seeds=tuple(int(s) for s in protocol.get("seeds", (0, 1, 2, 3, 4))),
            scaling=str(protocol.get("scaling", "none")),
            alphas=tuple(float(a) for a in stats_options.get("alphas", DEFAULT_ALPHAS)),
            critical_mode=str(stats_options.get("critical_mode", "exact")),
            name=str(raw.get("name", "run")),
            output_dir=Path(output.get("directory", "results")),
        )

    @classmethod
    def from_yaml(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"config file not found: {path}")
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValidationError(f"config file {path} must contain a mapping at top level")
        return cls.from_dict(raw)

    def validate(self) -> None:
        if len(self.learners) < 2:
            raise ValidationError(f"need at least 2 learners to compare, got {len(self.learners)}")
        ids = [entry.id for entry in self.learners]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate learner ids: {ids}")
        if not self.datasets:
            raise ValidationError("need at least 1 dataset")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate dataset names: {names}")
        for dataset in self.datasets:
            if dataset.csv is not None and not dataset.csv.exists():
                raise ValidationError(f"dataset {dataset.name!r}: file not found: {dataset.csv}")
        if not self.alphas:
            raise ValidationError("need at least one alpha level")
        if self.critical_mode not in CRITICAL_MODES:
            raise ValidationError(
                f"critical_mode must be one of {CRITICAL_MODES}, got {self.critical_mode!r}"
            )
        for alpha in self.alphas:
            if not 0 < alpha < 1:
                raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
            # fail fast if this alpha/k combination has no tabulated multiplier
            nemenyi_cd(len(self.learners), 1, alpha)
        # learner configs must construct cleanly for every dataset
        for entry in self.learners:
            for dataset in self.datasets:
                entry.config_for(dataset.name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "protocol": {
                "n_folds": self.n_folds,
                "k_batches": self.k_batches,
                "seeds": list(self.seeds),
                "scaling": self.scaling,
            },
            "stats": {"alphas": list(self.alphas), "critical_mode": self.critical_mode},
            "datasets": [d.to_dict() for d in self.datasets],
            "learners": [entry.to_dict() for entry in self.learners],
            "output": {"directory": str(self.output_dir)},
        }

    def build_plan(self) -> RunPlan:
        dataset_plans = []
        for dataset_config in self.datasets:
            dataset_plans.append(
                DatasetPlan(
                    dataset=dataset_config.load(),
                    batch_size=dataset_config.batch_size,
                    scaling=dataset_config.scaling or self.scaling,
                )
            )
        configs = {
            (entry.id, dp.dataset.name): entry.config_for(dp.dataset.name)
            for entry in self.learners
            for dp in dataset_plans
        }
        return RunPlan(
            learner_ids=[entry.id for entry in self.learners],
            dataset_plans=dataset_plans,
            configs=configs,
            n_folds=self.n_folds,
            seeds=self.seeds,
            k_batches=self.k_batches,
        )


def preset_names() -> list[str]:
    """Names of the configs bundled with the package."""
    root = resources.files(__package__) / "presets"
    return sorted(
        entry.name[: -len(".yaml")] for entry in root.iterdir() if entry.name.endswith(".yaml")
    )


def load_preset(name: str) -> RunConfig:
    """Load a bundled config by name (see preset_names())."""
    root = resources.files(__package__) / "presets"
    candidate = root / f"{name}.yaml"
    if not candidate.is_file():
        raise ValidationError(f"unknown preset {name!r}; available: {preset_names()}")
    raw = yaml.safe_load(candidate.read_text(encoding="utf-8"))
    return RunConfig.from_dict(raw)


@dataclass
class ResultsArchive:
    """Everything a run produced, as one self-contained record."""

    config: dict
    traces: list[MseTrace]
    score_matrix: ScoreMatrix
    ranking: RankMatrix | None
    friedman: list[FriedmanResult]
    nemenyi: NemenyiResult | None
    warnings: list[str] = field(default_factory=list)
    version: str = __version__
    created_at: str = ""

    @property
    def any_divergence(self) -> bool:
        return bool(self.score_matrix.diverged.any() or any(t.diverged for t in self.traces))

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "created_at": self.created_at,
            "config": self.config,
            "traces": [t.to_dict() for t in self.traces],
            "score_matrix": self.score_matrix.to_dict(),
            "ranking": None
            if self.ranking is None
            else {
                "model_names": self.ranking.model_names,
                "dataset_names": self.ranking.dataset_names,
                "ranks": self.ranking.ranks.tolist(),
                "average_ranks": self.ranking.average_ranks.tolist(),
            },
            "friedman": [f.to_dict() for f in self.friedman],
            "nemenyi": None if self.nemenyi is None else self.nemenyi.to_dict(),
            "warnings": list(self.warnings),
        }


def _stats_block(
    score_matrix: ScoreMatrix, alphas, critical_mode
) -> tuple[RankMatrix, list[FriedmanResult], NemenyiResult, list[str]]:
    captured: list[str] = []
    with warnings.catch_warnings(record=True) as records:
        warnings.simplefilter("always")
        ranking = rank_score_matrix(score_matrix)
        friedman: list[FriedmanResult] = []
        for alpha in alphas:
            try:
                friedman.append(friedman_test(ranking, alpha=alpha, critical_mode=critical_mode))
            except DegenerateStatisticError as error:
                captured.append(f"friedman test degenerate at alpha={alpha}: {error}")
        nemenyi = nemenyi_test(ranking, alphas=tuple(alphas))
    captured.extend(str(record.message) for record in records)
    return ranking, friedman, nemenyi, captured


def run_experiment(
    config: RunConfig, workers: int = 1, archive_path: str | Path | None = None
) -> ResultsArchive:
    """Execute the full pipeline and write the archive atomically.

    A failure in a late stage still writes whatever traces were collected
    (with the stats fields empty) before re-raising a stage-tagged error.
    """
    try:
        config.validate()
    except Exception as error:
        raise StageError("config", error) from error

    try:
        plan = config.build_plan()
        plan.validate()
    except StageError:
        raise
    except Exception as error:
        raise StageError("data", error) from error

    if archive_path is None:
        archive_path = config.output_dir / f"{config.name}.archive.json"
    archive_path = Path(archive_path)

    try:
        traces = collect_traces(plan, workers=workers)
        score_matrix = score_matrix_from_traces(plan, traces)
    except Exception as error:
        raise StageError("evaluate", error) from error

    created_at = _dt.datetime.now(_dt.timezone.utc).isoformat()
    try:
        ranking, friedman, nemenyi, captured = _stats_block(
            score_matrix, config.alphas, config.critical_mode
        )
    except Exception as error:
        partial = ResultsArchive(
            config=config.to_dict(),
            traces=traces,
            score_matrix=score_matrix,
            ranking=None,
            friedman=[],
            nemenyi=None,
            warnings=[f"stats stage failed: {error}"],
            created_at=created_at,
        )
        try:
            write_archive(partial, archive_path)
            logger.error("stats stage failed; partial archive written to %s", archive_path)
        except OSError:
            logger.error("stats stage failed and the partial archive could not be written")
        raise StageError("stats", error) from error

    archive = ResultsArchive(
        config=config.to_dict(),
        traces=traces,
        score_matrix=score_matrix,
        ranking=ranking,
        friedman=friedman,
        nemenyi=nemenyi,
        warnings=captured,
        created_at=created_at,
    )
    try:
        write_archive(archive, archive_path)
    except Exception as error:
        raise StageError("archive", error) from error
    return archive


def write_archive(archive: ResultsArchive, path: str | Path) -> Path:
    """Serialize to JSON and rename into place so readers never see a torn file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = json.dumps(archive.to_dict(), indent=2, sort_keys=True)
    handle = tempfile.NamedTemporaryFile(
        "w", dir=path.parent, prefix=path.name + ".", suffix=".tmp", delete=False, encoding="utf-8"
    )
    try:
        with handle:
            handle.write(payload)
        os.replace(handle.name, path)
    except BaseException:
        try:
            os.unlink(handle.name)
        except OSError:
            pass
        raise
    return path


def load_archive(path: str | Path) -> ResultsArchive:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"archive not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as error:
        raise ArchiveIntegrityError(f"archive {path} is not valid JSON: {error}") from error
    for key in ("config", "traces", "score_matrix"):
        if key not in payload:
            raise ArchiveIntegrityError(f"archive {path} is missing its {key!r} section")
    score_matrix = ScoreMatrix.from_dict(payload["score_matrix"])
    ranking = None
    if payload.get("ranking") is not None:
        r = payload["ranking"]
        ranking = RankMatrix(
            ranks=np.asarray(r["ranks"], dtype=np.float64),
            model_names=list(r["model_names"]),
            dataset_names=list(r["dataset_names"]),
        )
    friedman = [FriedmanResult(**f) for f in payload.get("friedman") or []]
    nemenyi = None
    if payload.get("nemenyi") is not None:
        n = payload["nemenyi"]
        nemenyi = NemenyiResult(
            model_names=list(n["model_names"]),
            q_alpha={float(a): q for a, q in n["q_alpha"].items()},
            cd={float(a): c for a, c in n["cd"].items()},
            diffs=np.asarray(n["diffs"], dtype=np.float64),
            verdicts={float(a): np.asarray(m, dtype=bool) for a, m in n["verdicts"].items()},
        )
    return ResultsArchive(
        config=payload["config"],
        traces=[MseTrace.from_dict(t) for t in payload["traces"]],
        score_matrix=score_matrix,
        ranking=ranking,
        friedman=friedman,
        nemenyi=nemenyi,
        warnings=list(payload.get("warnings", [])),
        version=payload.get("version", "unknown"),
        created_at=payload.get("created_at", ""),
    )


def verify_integrity(archive: ResultsArchive) -> None:
    """Recompute every statistic from the embedded score grid; any drift is an error."""
    if archive.ranking is None:
        return  # nothing stored to verify against
    stats_config = archive.config.get("stats", {})
    alphas = tuple(float(a) for a in stats_config.get("alphas", DEFAULT_ALPHAS))
    critical_mode = str(stats_config.get("critical_mode", "exact"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ranking, friedman, nemenyi, _ = _stats_block(archive.score_matrix, alphas, critical_mode)
    if (
        ranking.model_names != archive.ranking.model_names
        or ranking.dataset_names != archive.ranking.dataset_names
        or not np.array_equal(ranking.ranks, archive.ranking.ranks)
    ):
        raise ArchiveIntegrityError("stored ranking does not match the embedded score grid")
    stored = [f.to_dict() for f in archive.friedman]
    recomputed = [f.to_dict() for f in friedman]
    if stored != recomputed:
        raise ArchiveIntegrityError("stored test statistics do not match the embedded score grid")
    if (archive.nemenyi is None) != (nemenyi is None):
        raise ArchiveIntegrityError("stored pairwise results do not match the embedded score grid")
    if archive.nemenyi is not None and archive.nemenyi.to_dict() != nemenyi.to_dict():
        raise ArchiveIntegrityError("stored pairwise results do not match the embedded score grid")
