"""Streaming evaluation protocol: per-fold prequential runs measuring held-out
MSE after each early mini-batch, repeated over seeds, aggregated into a
score grid of learners x datasets.

Every job is a pure function of (plan, learner id, dataset ordinal, fold,
seed), and aggregation iterates jobs in plan order, so worker scheduling can
never change a single bit of the output.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, apply_scaler, derive_seed, fit_scaler, kfold_split, minibatch_stream
from .errors import ConditioningError, DivergenceError, ValidationError
from .learners import LearnerConfig, init, partial_fit, predict

logger = logging.getLogger(__name__)

# seed-derivation tags, so fold and stream randomness never collide
_FOLD_TAG = 1
_STREAM_TAG = 2

DEFAULT_K = 10
DEFAULT_SEEDS = (0, 1, 2, 3, 4)


def mse(predictions, targets) -> float:
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape:
        raise ValidationError(
            f"predictions {predictions.shape} and targets {targets.shape} disagree"
        )
    if predictions.size == 0:
        raise ValidationError("mse of empty input is undefined")
    with np.errstate(over="ignore"):
        return float(np.mean((predictions - targets) ** 2))


@dataclass
class MseTrace:
    """Held-out MSE after each of the first K mini-batches of one run."""

    learner_id: str
    dataset_id: str
    fold: int
    seed: int
    values: list[float] = field(default_factory=list)
    diverged: bool = False
    diverged_at: int | None = None

    def __post_init__(self):
        for v in self.values:
            if not (np.isfinite(v) and v >= 0):
                raise ValidationError(f"trace values must be finite and >= 0, got {v}")

    def to_dict(self) -> dict:
        return {
            "learner_id": self.learner_id,
            "dataset_id": self.dataset_id,
            "fold": self.fold,
            "seed": self.seed,
            "values": [float(v) for v in self.values],
            "diverged": self.diverged,
            "diverged_at": self.diverged_at,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "MseTrace":
        return cls(**payload)


@dataclass
class DatasetPlan:
    """One dataset plus the streaming parameters it is evaluated under."""

    dataset: Dataset
    batch_size: int
    scaling: str = "none"


@dataclass
class RunPlan:
    """Everything needed to reproduce a full evaluation grid."""

    learner_ids: list[str]
    dataset_plans: list[DatasetPlan]
    configs: dict[tuple[str, str], LearnerConfig]
    n_folds: int = 5
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    k_batches: int = DEFAULT_K

    def validate(self) -> None:
        if not self.learner_ids:
            raise ValidationError("plan needs at least one learner")
        if len(set(self.learner_ids)) != len(self.learner_ids):
            raise ValidationError(f"duplicate learner ids in {self.learner_ids}")
        if not self.dataset_plans:
            raise ValidationError("plan needs at least one dataset")
        names = [dp.dataset.name for dp in self.dataset_plans]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate dataset names in {names}")
        if self.n_folds < 2:
            raise ValidationError(f"n_folds must be >= 2, got {self.n_folds}")
        if not self.seeds:
            raise ValidationError("plan needs at least one seed")
        if self.k_batches < 1:
            raise ValidationError(f"k_batches must be >= 1, got {self.k_batches}")
        for dp in self.dataset_plans:
            n = dp.dataset.n_points
            if dp.batch_size < 1:
                raise ValidationError(
                    f"batch_size must be >= 1 for dataset {dp.dataset.name!r}, got {dp.batch_size}"
                )
            if n < 2 * self.n_folds:
                raise ValidationError(
                    f"dataset {dp.dataset.name!r} has {n} rows; needs at least "
                    f"2 x n_folds = {2 * self.n_folds}"
                )
            # smallest train split must still supply k_batches mini-batches
            largest_test = n // self.n_folds + (1 if n % self.n_folds else 0)
            min_train = n - largest_test
            available = -(-min_train // dp.batch_size)  # ceil
            if available < self.k_batches:
                raise ValidationError(
                    f"dataset {dp.dataset.name!r}: train split of {min_train} rows at "
                    f"batch size {dp.batch_size} yields only {available} mini-batches, "
                    f"fewer than the {self.k_batches} to be scored"
                )
        for learner_id in self.learner_ids:
            for dp in self.dataset_plans:
                key = (learner_id, dp.dataset.name)
                if key not in self.configs:
                    raise ValidationError(f"plan is missing a config for {key}")
                self.configs[key].validate()

    def jobs(self) -> list[tuple[str, int, int, int]]:
        """Deterministic enumeration: (learner_id, dataset ordinal, fold, seed)."""
        return [
            (learner_id, ordinal, fold, seed)
            for ordinal in range(len(self.dataset_plans))
            for learner_id in self.learner_ids
            for fold in range(self.n_folds)
            for seed in self.seeds
        ]


def prequential_run(
    config: LearnerConfig,
    train: tuple[np.ndarray, np.ndarray],
    test: tuple[np.ndarray, np.ndarray],
    batch_size: int,
    k_batches: int,
    seed: int,
    learner_id: str = "",
    dataset_id: str = "",
    fold: int = 0,
) -> MseTrace:
    """Stream the train split; record held-out MSE after each of the first
    k_batches updates. Divergence truncates the trace and flags the batch."""
    train_X, train_y = train
    test_X, test_y = test
    if k_batches < 1:
        raise ValidationError(f"k_batches must be >= 1, got {k_batches}")
    state = init(config, d=train_X.shape[1])
    trace = MseTrace(
        learner_id=learner_id or config.algorithm,
        dataset_id=dataset_id,
        fold=fold,
        seed=seed,
    )
    stream = minibatch_stream(train_X, train_y, batch_size, seed=seed)
    for batch in stream:
        if batch.index >= k_batches:
            break
        try:
            state = partial_fit(state, batch, config)
            value = mse(predict(state, test_X), test_y)
        except (DivergenceError, ConditioningError) as error:
            trace.diverged = True
            trace.diverged_at = batch.index
            logger.warning(
                "%s on %s (fold %d, seed %d) diverged at batch %d: %s",
                trace.learner_id, dataset_id, fold, seed, batch.index, error,
            )
            break
        if not np.isfinite(value):
            # finite weights can still overflow the squared error
            trace.diverged = True
            trace.diverged_at = batch.index
            logger.warning(
                "%s on %s (fold %d, seed %d): non-finite MSE at batch %d",
                trace.learner_id, dataset_id, fold, seed, batch.index,
            )
            break
        trace.values.append(value)
    return trace


def aggregate_cell(traces: list[MseTrace], k_batches: int) -> float | None:
    """Mean over folds, seeds, and the first k_batches recorded values.

    Returns None when every trace diverged; surviving traces alone feed the
    mean otherwise.
    """
    if not traces:
        raise ValidationError("cannot aggregate an empty trace list")
    pool: list[float] = []
    for trace in traces:
        if trace.diverged:
            continue
        pool.extend(trace.values[:k_batches])
    if not pool:
        return None
    return float(np.mean(pool))


@dataclass
class ScoreMatrix:
    """Aggregated k x N grid: learners as rows, datasets as columns."""

    model_ids: list[str]
    dataset_ids: list[str]
    scores: np.ndarray
    diverged: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.diverged = np.asarray(self.diverged, dtype=bool)
        k, n = len(self.model_ids), len(self.dataset_ids)
        if self.scores.shape != (k, n) or self.diverged.shape != (k, n):
            raise ValidationError(
                f"grid shapes {self.scores.shape}/{self.diverged.shape} do not match "
                f"{k} models x {n} datasets"
            )
        alive = ~self.diverged
        values = self.scores[alive]
        if values.size and (not np.isfinite(values).all() or values.min() < 0):
            raise ValidationError("non-diverged scores must be finite and >= 0")

    def to_dict(self) -> dict:
        scores = [
            [None if self.diverged[i, j] else float(self.scores[i, j]) for j in range(len(self.dataset_ids))]
            for i in range(len(self.model_ids))
        ]
        return {
            "model_ids": list(self.model_ids),
            "dataset_ids": list(self.dataset_ids),
            "scores": scores,
            "diverged": self.diverged.astype(int).tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ScoreMatrix":
        diverged = np.asarray(payload["diverged"], dtype=bool)
        scores = np.array(
            [[np.nan if v is None else float(v) for v in row] for row in payload["scores"]]
        )
        return cls(
            model_ids=list(payload["model_ids"]),
            dataset_ids=list(payload["dataset_ids"]),
            scores=scores,
            diverged=diverged,
            metadata=dict(payload.get("metadata", {})),
        )

    def canonical_bytes(self) -> bytes:
        """Stable byte encoding for reproducibility comparisons."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        lines = ["model," + ",".join(self.dataset_ids)]
        for i, model in enumerate(self.model_ids):
            cells = [
                "diverged" if self.diverged[i, j] else repr(float(self.scores[i, j]))
                for j in range(len(self.dataset_ids))
            ]
            lines.append(model + "," + ",".join(cells))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    @classmethod
    def from_csv(cls, path: str | Path) -> "ScoreMatrix":
        path = Path(path)
        lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
        if len(lines) < 2:
            raise ValidationError(f"score grid {path} needs a header and at least one model row")
        header = lines[0].split(",")
        dataset_ids = [h.strip() for h in header[1:]]
        if not dataset_ids:
            raise ValidationError(f"score grid {path} has no dataset columns")
        model_ids, rows, mask = [], [], []
        for line in lines[1:]:
            cells = line.split(",")
            if len(cells) != len(header):
                raise ValidationError(f"row {line!r} has {len(cells)} cells, expected {len(header)}")
            model_ids.append(cells[0].strip())
            row, row_mask = [], []
            for cell in cells[1:]:
                cell = cell.strip()
                if cell in ("", "diverged"):
                    row.append(np.nan)
                    row_mask.append(True)
                else:
                    try:
                        row.append(float(cell))
                    except ValueError:
                        raise ValidationError(f"non-numeric score {cell!r} in {path}") from None
                    row_mask.append(False)
            rows.append(row)
            mask.append(row_mask)
        return cls(
            model_ids=model_ids,
            dataset_ids=dataset_ids,
            scores=np.asarray(rows),
            diverged=np.asarray(mask),
        )


def _prepare_splits(plan: RunPlan, ordinal: int, fold: int, seed: int):
    """Fold indices, scaling, and the train/test arrays for one job."""
    dp = plan.dataset_plans[ordinal]
    fold_plan = kfold_split(dp.dataset, plan.n_folds, seed=derive_seed(seed, _FOLD_TAG, ordinal))
    train_idx = fold_plan.train_indices(fold)
    test_idx = fold_plan.test_indices(fold)
    train_X, train_y = dp.dataset.features[train_idx], dp.dataset.targets[train_idx]
    test_X, test_y = dp.dataset.features[test_idx], dp.dataset.targets[test_idx]
    scaler = fit_scaler(train_X, train_y, policy=dp.scaling)
    train_X, train_y = apply_scaler(scaler, train_X, train_y)
    test_X, test_y = apply_scaler(scaler, test_X, test_y)
    return (train_X, train_y), (test_X, test_y)


def run_job(plan: RunPlan, learner_id: str, ordinal: int, fold: int, seed: int) -> MseTrace:
    """Execute one (learner, dataset, fold, seed) cell."""
    dp = plan.dataset_plans[ordinal]
    train, test = _prepare_splits(plan, ordinal, fold, seed)
    trace = prequential_run(
        config=plan.configs[(learner_id, dp.dataset.name)],
        train=train,
        test=test,
        batch_size=dp.batch_size,
        k_batches=plan.k_batches,
        seed=derive_seed(seed, _STREAM_TAG, ordinal, fold),
        learner_id=learner_id,
        dataset_id=dp.dataset.name,
        fold=fold,
    )
    trace.seed = seed  # key traces by the protocol seed, not the derived stream seed
    return trace


def collect_traces(plan: RunPlan, workers: int = 1) -> list[MseTrace]:
    """All traces in plan-enumeration order, regardless of worker scheduling."""
    plan.validate()
    jobs = plan.jobs()
    if workers <= 1:
        # reuse each job's splits within a dataset? they differ per (fold, seed);
        # splits are cheap next to the updates, so recompute per job
        return [run_job(plan, *job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_job, plan, *job) for job in jobs]
        return [f.result() for f in futures]


def score_matrix_from_traces(plan: RunPlan, traces: list[MseTrace]) -> ScoreMatrix:
    by_cell: dict[tuple[str, str], list[MseTrace]] = {}
    for trace in traces:
        by_cell.setdefault((trace.learner_id, trace.dataset_id), []).append(trace)
    k = len(plan.learner_ids)
    n = len(plan.dataset_plans)
    scores = np.zeros((k, n))
    diverged = np.zeros((k, n), dtype=bool)
    for j, dp in enumerate(plan.dataset_plans):
        for i, learner_id in enumerate(plan.learner_ids):
            cell_traces = by_cell.get((learner_id, dp.dataset.name), [])
            # fixed aggregation order: sort by (fold, seed) so float summation
            # never depends on completion order
            cell_traces = sorted(cell_traces, key=lambda t: (t.fold, t.seed))
            value = aggregate_cell(cell_traces, plan.k_batches)
            if value is None:
                scores[i, j] = np.nan
                diverged[i, j] = True
            else:
                scores[i, j] = value
    return ScoreMatrix(
        model_ids=list(plan.learner_ids),
        dataset_ids=[dp.dataset.name for dp in plan.dataset_plans],
        scores=scores,
        diverged=diverged,
        metadata={
            "k_batches": plan.k_batches,
            "n_folds": plan.n_folds,
            "seeds": list(plan.seeds),
            "batch_sizes": {dp.dataset.name: dp.batch_size for dp in plan.dataset_plans},
            "scaling": {dp.dataset.name: dp.scaling for dp in plan.dataset_plans},
        },
    )


def build_score_matrix(plan: RunPlan, workers: int = 1) -> ScoreMatrix:
    """Run the full grid and aggregate it."""
    return score_matrix_from_traces(plan, collect_traces(plan, workers=workers))
