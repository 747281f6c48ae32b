"""Reproducible data streams: synthetic generation, CSV ingestion, scaling,
k-fold splitting and seeded mini-batch sequencing.

Every operation here is a pure function of its inputs plus an explicit seed,
so streams can be rebuilt identically from any worker.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import IngestionError, ScalerStateError, ValidationError

DEFAULT_COEF_RANGE = (-10.0, 10.0)

SCALING_POLICIES = ("zscore", "none")


def derive_seed(*parts: int) -> int:
    """Deterministically mix integer parts into a fresh 64-bit seed.

    Built on numpy's SeedSequence so that (seed, fold) pairs yield
    well-separated stream seeds on every platform.
    """
    state = np.random.SeedSequence([int(p) for p in parts]).generate_state(2)
    return int(state[0]) << 32 | int(state[1])


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic linear-response dataset."""

    n_points: int
    n_dims: int
    noise_sigma: float
    coef_range: tuple[float, float] = DEFAULT_COEF_RANGE
    seed: int = 0

    def validate(self) -> None:
        if self.n_points < 2:
            raise ValidationError(f"n_points must be >= 2, got {self.n_points}")
        if self.n_dims < 1:
            raise ValidationError(f"n_dims must be >= 1, got {self.n_dims}")
        if self.noise_sigma < 0:
            raise ValidationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        lo, hi = self.coef_range
        if not lo < hi:
            raise ValidationError(f"coef_range must be a non-empty interval, got {self.coef_range}")

    def to_dict(self) -> dict:
        return {
            "n_points": self.n_points,
            "n_dims": self.n_dims,
            "noise_sigma": self.noise_sigma,
            "coef_range": list(self.coef_range),
            "seed": self.seed,
        }


@dataclass
class Dataset:
    """Named feature matrix plus target vector, with provenance."""

    name: str
    features: np.ndarray  # (n, d)
    targets: np.ndarray  # (n,)
    provenance: SyntheticSpec | str | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValidationError(f"features must be 2-D, got shape {self.features.shape}")
        if self.targets.ndim != 1:
            raise ValidationError(f"targets must be 1-D, got shape {self.targets.shape}")
        if self.features.shape[0] != self.targets.shape[0]:
            raise ValidationError(
                f"feature rows ({self.features.shape[0]}) and targets "
                f"({self.targets.shape[0]}) disagree for dataset {self.name!r}"
            )
        if not np.isfinite(self.features).all() or not np.isfinite(self.targets).all():
            raise ValidationError(f"dataset {self.name!r} contains non-finite values")

    @property
    def n_points(self) -> int:
        return self.features.shape[0]

    @property
    def n_dims(self) -> int:
        return self.features.shape[1]


def generate_synthetic(spec: SyntheticSpec, name: str = "synthetic") -> Dataset:
    """Draw a dataset with a linear response and additive Gaussian noise.

    Features are i.i.d. uniform on [-1, 1]; the true coefficients and
    intercept are uniform on ``spec.coef_range``. Fully determined by
    ``spec.seed``.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.coef_range
    features = rng.uniform(-1.0, 1.0, size=(spec.n_points, spec.n_dims))
    coefs = rng.uniform(lo, hi, size=spec.n_dims)
    intercept = rng.uniform(lo, hi)
    noise = rng.normal(0.0, spec.noise_sigma, size=spec.n_points)
    targets = features @ coefs + intercept + noise
    return Dataset(name=name, features=features, targets=targets, provenance=spec)


def load_csv(
    path: str | Path,
    target_column: str | None = None,
    name: str | None = None,
) -> Dataset:
    """Ingest a UTF-8, comma-separated, headered CSV into a Dataset.

    The target column defaults to the last header column; every other column
    is a feature. Non-numeric or non-finite cells abort with the offending
    row and column named. Rows are numbered from 1 with the header as row 1.
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError("file not found", path=str(path))
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError("empty file", path=str(path)) from None
        header = [h.strip() for h in header]
        if target_column is None:
            target_column = header[-1]
        if target_column not in header:
            raise IngestionError(
                f"target column {target_column!r} not present in header {header}",
                path=str(path),
            )
        target_pos = header.index(target_column)
        feature_names = [h for i, h in enumerate(header) if i != target_pos]

        feature_rows: list[list[float]] = []
        target_values: list[float] = []
        for row_number, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue  # tolerate trailing blank lines
            if len(row) != len(header):
                raise IngestionError(
                    f"expected {len(header)} cells, found {len(row)}",
                    path=str(path),
                    row=row_number,
                )
            parsed = []
            for pos, cell in enumerate(row):
                try:
                    value = float(cell)
                except ValueError:
                    raise IngestionError(
                        f"non-numeric value {cell.strip()!r}",
                        path=str(path),
                        row=row_number,
                        column=header[pos],
                    ) from None
                if not np.isfinite(value):
                    raise IngestionError(
                        f"non-finite value {cell.strip()!r}",
                        path=str(path),
                        row=row_number,
                        column=header[pos],
                    )
                parsed.append(value)
            target_values.append(parsed.pop(target_pos))
            feature_rows.append(parsed)

    if not feature_rows:
        raise IngestionError("no data rows after header", path=str(path))
    features = np.asarray(feature_rows, dtype=np.float64)
    targets = np.asarray(target_values, dtype=np.float64)
    _ = feature_names  # order is preserved implicitly by column position
    return Dataset(name=name or path.stem, features=features, targets=targets, provenance=str(path))


def export_csv(dataset: Dataset, path: str | Path) -> Path:
    """Write a dataset to CSV (x1..xd followed by y) for archival or reload."""
    path = Path(path)
    header = [f"x{i + 1}" for i in range(dataset.n_dims)] + ["y"]
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row, target in zip(dataset.features, dataset.targets):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(target))])
    return path


@dataclass
class ScalerParams:
    """Per-column location/scale for features and target under one policy."""

    policy: str = "none"
    feature_loc: np.ndarray | None = None
    feature_scale: np.ndarray | None = None
    target_loc: float | None = None
    target_scale: float | None = None

    @property
    def fitted(self) -> bool:
        if self.policy == "none":
            return True
        return self.feature_loc is not None and self.feature_scale is not None

    def _require_fitted(self):
        if not self.fitted:
            raise ScalerStateError(f"scaler with policy {self.policy!r} applied before fit")


def fit_scaler(features: np.ndarray, targets: np.ndarray, policy: str = "zscore") -> ScalerParams:
    """Fit scaling parameters on training rows only.

    z-score maps each column to mean 0 / population std 1; columns with zero
    spread fall back to scale 1 so the transform stays invertible.
    """
    if policy not in SCALING_POLICIES:
        raise ValidationError(f"unknown scaling policy {policy!r}; expected one of {SCALING_POLICIES}")
    if policy == "none":
        return ScalerParams(policy="none")
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    floc = features.mean(axis=0)
    fscale = features.std(axis=0)
    fscale = np.where(fscale > 0, fscale, 1.0)
    tloc = float(targets.mean())
    tscale = float(targets.std())
    if tscale <= 0:
        tscale = 1.0
    return ScalerParams("zscore", floc, fscale, tloc, tscale)


def apply_scaler(params: ScalerParams, features: np.ndarray, targets: np.ndarray):
    params._require_fitted()
    if params.policy == "none":
        return features, targets
    return (features - params.feature_loc) / params.feature_scale, (
        targets - params.target_loc
    ) / params.target_scale


def invert_scaler(params: ScalerParams, features: np.ndarray, targets: np.ndarray):
    params._require_fitted()
    if params.policy == "none":
        return features, targets
    return features * params.feature_scale + params.feature_loc, (
        targets * params.target_scale + params.target_loc
    )


@dataclass
class FoldPlan:
    """Assignment of every row to exactly one of k folds."""

    k: int
    assignments: np.ndarray  # (n,) fold index per row
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def kfold_split(dataset: Dataset, k: int = 5, seed: int = 0) -> FoldPlan:
    """Seeded shuffle followed by a contiguous partition into k folds.

    Fold sizes differ by at most one row; deterministic for a fixed seed.
    """
    n = dataset.n_points
    if k < 2:
        raise ValidationError(f"fold count must be >= 2, got {k}")
    if k > n:
        raise ValidationError(f"fold count {k} exceeds dataset size {n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    base, extra = divmod(n, k)
    start = 0
    for fold in range(k):
        size = base + (1 if fold < extra else 0)
        assignments[perm[start : start + size]] = fold
        start += size
    return FoldPlan(k=k, assignments=assignments, seed=seed)


@dataclass
class MiniBatch:
    features: np.ndarray  # (b, d)
    targets: np.ndarray  # (b,)
    index: int

    def __len__(self) -> int:
        return self.targets.shape[0]


def minibatch_stream(
    features: np.ndarray,
    targets: np.ndarray,
    batch_size: int,
    seed: int = 0,
) -> Iterator[MiniBatch]:
    """Yield a seeded shuffle of the rows in consecutive batch_size slices.

    The final batch may be short; it is emitted, not dropped. Concatenating
    all batches reproduces the shuffled training set exactly.
    """
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = targets.shape[0]
    if n == 0:
        raise ValidationError("cannot stream an empty training set")
    if batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
    perm = np.random.default_rng(seed).permutation(n)
    for index, start in enumerate(range(0, n, batch_size)):
        rows = perm[start : start + batch_size]
        yield MiniBatch(features=features[rows], targets=targets[rows], index=index)
