"""Eight online linear-regression learners behind one incremental interface.

All learners share the prediction form y_hat = w . x + b and the squared loss
(1/2)(y_hat - y)^2, so per-point gradients carry no factor 2. Internally each
update works on the augmented weight vector [w, b] against features padded
with a constant 1; regularized variants never penalize the intercept slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import MiniBatch
from .errors import ConditioningError, DivergenceError, ValidationError

ALGORITHMS = ("sgd", "mbgd", "lms", "orr", "olr", "rls", "pa", "olr_wa")

DISPLAY_NAMES = {
    "sgd": "SGD",
    "mbgd": "MBGD",
    "lms": "LMS",
    "orr": "ORR",
    "olr": "OLR",
    "rls": "RLS",
    "pa": "PA",
    "olr_wa": "OLR-WA",
}

# Least-squares solves get a tiny diagonal bump so single-batch fits stay
# solvable even when the batch has fewer rows than columns.
SOLVE_RIDGE = 1e-8


def canonical_algorithm(name: str) -> str:
    """Normalize user-facing spellings (OLR-WA, Sgd, olr wa) to internal ids."""
    key = name.strip().lower().replace("-", "_").replace(" ", "_")
    if key not in ALGORITHMS:
        raise ValidationError(f"unknown algorithm {name!r}; expected one of {list(ALGORITHMS)}")
    return key


@dataclass
class LinearModel:
    """Weight vector plus intercept; the thing every learner ultimately emits."""

    weights: np.ndarray
    intercept: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.intercept = float(self.intercept)

    @property
    def n_dims(self) -> int:
        return self.weights.shape[0]

    def augmented(self) -> np.ndarray:
        return np.append(self.weights, self.intercept)

    @classmethod
    def from_augmented(cls, vector: np.ndarray) -> "LinearModel":
        vector = np.asarray(vector, dtype=np.float64)
        return cls(weights=vector[:-1].copy(), intercept=float(vector[-1]))

    def copy(self) -> "LinearModel":
        return LinearModel(weights=self.weights.copy(), intercept=self.intercept)


@dataclass
class LearnerConfig:
    """Hyperparameters for one learner; unused fields are ignored by others."""

    algorithm: str
    eta: float = 0.01
    lam: float = 0.1
    delta: float = 0.01
    C: float = 0.1
    epsilon: float = 0.1
    epochs_multiplier: int = 1
    w_base: float = 0.5
    w_inc: float = 0.5

    def __post_init__(self):
        self.algorithm = canonical_algorithm(self.algorithm)

    def validate(self) -> None:
        a = self.algorithm
        if a in ("sgd", "mbgd", "lms", "orr", "olr") and not self.eta > 0:
            raise ValidationError(f"eta must be > 0 for {a}, got {self.eta}")
        if a in ("sgd", "mbgd", "orr", "olr"):
            if not (isinstance(self.epochs_multiplier, int) and self.epochs_multiplier >= 1):
                raise ValidationError(
                    f"epochs_multiplier must be a positive integer, got {self.epochs_multiplier!r}"
                )
        if a in ("orr", "olr") and self.lam < 0:
            raise ValidationError(f"lambda must be >= 0 for {a}, got {self.lam}")
        if a == "rls":
            if not 0 < self.lam <= 1:
                raise ValidationError(f"forgetting factor must be in (0, 1] for rls, got {self.lam}")
            if not self.delta > 0:
                raise ValidationError(f"delta must be > 0 for rls, got {self.delta}")
        if a == "pa":
            if not self.C > 0:
                raise ValidationError(f"C must be > 0 for pa, got {self.C}")
            if self.epsilon < 0:
                raise ValidationError(f"epsilon must be >= 0 for pa, got {self.epsilon}")
        if a == "olr_wa" and not (self.w_base + self.w_inc) > 0:
            raise ValidationError(
                f"w_base + w_inc must be > 0 for olr_wa, got {self.w_base} + {self.w_inc}"
            )

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "eta": self.eta,
            "lambda": self.lam,
            "delta": self.delta,
            "C": self.C,
            "epsilon": self.epsilon,
            "epochs_multiplier": self.epochs_multiplier,
            "w_base": self.w_base,
            "w_inc": self.w_inc,
        }


_DEFAULT_OVERRIDES: dict[str, dict] = {
    "sgd": {"eta": 0.01, "epochs_multiplier": 2},
    "mbgd": {"eta": 0.01, "epochs_multiplier": 5},
    "lms": {"eta": 0.01},
    "orr": {"eta": 0.01, "lam": 0.1, "epochs_multiplier": 2},
    "olr": {"eta": 0.01, "lam": 0.1, "epochs_multiplier": 2},
    "rls": {"lam": 0.99, "delta": 0.01},
    "pa": {"C": 0.1, "epsilon": 0.1},
    "olr_wa": {"w_base": 0.5, "w_inc": 0.5},
}


def default_config(algorithm: str, **overrides) -> LearnerConfig:
    """Baseline hyperparameters per algorithm, with keyword overrides on top."""
    key = canonical_algorithm(algorithm)
    params = dict(_DEFAULT_OVERRIDES[key])
    params.update(overrides)
    config = LearnerConfig(algorithm=key, **params)
    config.validate()
    return config


@dataclass
class LearnerState:
    """Mutable per-run state: the model plus algorithm-specific extras."""

    algorithm: str
    model: LinearModel
    n_seen: int = 0
    P: np.ndarray | None = None  # rls inverse-correlation matrix, (d+1, d+1)
    base: LinearModel | None = None  # olr_wa running base model


def init(config: LearnerConfig, d: int) -> LearnerState:
    """Fresh zero state for a d-dimensional problem."""
    config.validate()
    if d < 1:
        raise ValidationError(f"feature dimension must be >= 1, got {d}")
    model = LinearModel(weights=np.zeros(d), intercept=0.0)
    state = LearnerState(algorithm=config.algorithm, model=model)
    if config.algorithm == "rls":
        state.P = np.eye(d + 1) / config.delta
    return state


def predict(state_or_model: LearnerState | LinearModel, features: np.ndarray) -> np.ndarray:
    model = state_or_model.model if isinstance(state_or_model, LearnerState) else state_or_model
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[None, :]
    if features.shape[1] != model.n_dims:
        raise ValidationError(
            f"feature width {features.shape[1]} does not match model dimension {model.n_dims}"
        )
    return features @ model.weights + model.intercept


def _augment(batch: MiniBatch) -> np.ndarray:
    return np.hstack([batch.features, np.ones((len(batch), 1))])


def _check_finite(w: np.ndarray, config: LearnerConfig) -> None:
    if not np.isfinite(w).all():
        raise DivergenceError(
            f"weights became non-finite during {config.algorithm} update (eta={config.eta})"
        )


def _write_back(state: LearnerState, w: np.ndarray) -> LearnerState:
    state.model = LinearModel.from_augmented(w)
    return state


def sgd_update(state: LearnerState, batch: MiniBatch, config: LearnerConfig) -> LearnerState:
    """Per-point gradient steps, repeating the batch for each configured epoch."""
    w = state.model.augmented()
    aug = _augment(batch)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(config.epochs_multiplier):
            for x, y in zip(aug, batch.targets):
                # eta scales the assembled gradient so the lambda=0 trajectories
                # of the regularized variants reduce to this one bit-for-bit
                w -= config.eta * (((w @ x) - y) * x)
    _check_finite(w, config)
    return _write_back(state, w)


def mbgd_update(state: LearnerState, batch: MiniBatch, config: LearnerConfig) -> LearnerState:
    """One batch-mean gradient step per epoch."""
    w = state.model.augmented()
    aug = _augment(batch)
    b = len(batch)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(config.epochs_multiplier):
            residuals = aug @ w - batch.targets
            w -= config.eta * (aug.T @ residuals) / b
    _check_finite(w, config)
    return _write_back(state, w)


def lms_update(state: LearnerState, batch: MiniBatch, config: LearnerConfig) -> LearnerState:
    """Widrow-Hoff: a single per-point pass, no epochs, no regularization."""
    w = state.model.augmented()
    with np.errstate(over="ignore", invalid="ignore"):
        for x, y in zip(_augment(batch), batch.targets):
            w += config.eta * ((y - (w @ x)) * x)
    _check_finite(w, config)
    return _write_back(state, w)


def orr_update(state: LearnerState, batch: MiniBatch, config: LearnerConfig) -> LearnerState:
    """Per-point gradient steps with an L2 penalty; intercept slot unpenalized."""
    w = state.model.augmented()
    aug = _augment(batch)
    penalty_mask = np.ones_like(w)
    penalty_mask[-1] = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(config.epochs_multiplier):
            for x, y in zip(aug, batch.targets):
                w -= config.eta * (((w @ x) - y) * x + config.lam * penalty_mask * w)
    _check_finite(w, config)
    return _write_back(state, w)


def olr_update(state: LearnerState, batch: MiniBatch, config: LearnerConfig) -> LearnerState:
    """Per-point subgradient steps with an L1 penalty; sign(0) = 0, intercept free."""
    w = state.model.augmented()
    aug = _augment(batch)
    penalty_mask = np.ones_like(w)
    penalty_mask[-1] = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(config.epochs_multiplier):
            for x, y in zip(aug, batch.targets):
                w -= config.eta * (((w @ x) - y) * x + config.lam * penalty_mask * np.sign(w))
    _check_finite(w, config)
    return _write_back(state, w)


def rls_update(state: LearnerState, batch: MiniBatch, config: LearnerConfig) -> LearnerState:
    """Recursive least squares with forgetting factor; P re-symmetrized each step."""
    if state.P is None:
        raise ValidationError("rls state missing its P matrix; was init called with the rls config?")
    w = state.model.augmented()
    P = state.P
    lam = config.lam
    for x, y in zip(_augment(batch), batch.targets):
        u = P @ x
        g = u / (lam + x @ u)
        w += g * (y - (w @ x))
        P = (P - np.outer(g, u)) / lam
        P = (P + P.T) * 0.5
    if not np.isfinite(P).all():
        raise ConditioningError("rls inverse-correlation matrix became non-finite")
    _check_finite(w, config)
    state.P = P
    return _write_back(state, w)


def pa_update(state: LearnerState, batch: MiniBatch, config: LearnerConfig) -> LearnerState:
    """Passive-aggressive regression with an epsilon-insensitive tube and slack."""
    w = state.model.augmented()
    for x, y in zip(_augment(batch), batch.targets):
        residual = (w @ x) - y
        loss = abs(residual) - config.epsilon
        if loss <= 0:
            continue
        tau = loss / ((x @ x) + 1.0 / (2.0 * config.C))
        w -= math.copysign(tau, residual) * x
    _check_finite(w, config)
    return _write_back(state, w)


def combine_models(base: LinearModel, incremental: LinearModel, w_base: float, w_inc: float) -> LinearModel:
    """Component-wise weighted average of two models.

    Isolated so alternative combination rules can swap in without touching
    the rest of the learner.
    """
    total = w_base + w_inc
    if not total > 0:
        raise ValidationError(f"combination weights must sum to > 0, got {w_base} + {w_inc}")
    weights = (w_base * base.weights + w_inc * incremental.weights) / total
    intercept = (w_base * base.intercept + w_inc * incremental.intercept) / total
    return LinearModel(weights=weights, intercept=intercept)


def _batch_least_squares(batch: MiniBatch) -> LinearModel:
    aug = _augment(batch)
    gram = aug.T @ aug
    gram[np.diag_indices_from(gram)] += SOLVE_RIDGE
    solution = np.linalg.solve(gram, aug.T @ batch.targets)
    if not np.isfinite(solution).all():
        raise ConditioningError("least-squares fit on mini-batch produced non-finite coefficients")
    return LinearModel.from_augmented(solution)


def olr_wa_update(state: LearnerState, batch: MiniBatch, config: LearnerConfig) -> LearnerState:
    """Weighted average of the running base model and a fresh per-batch fit."""
    incremental = _batch_least_squares(batch)
    if state.base is None:
        state.base = incremental
    else:
        state.base = combine_models(state.base, incremental, config.w_base, config.w_inc)
    state.model = state.base.copy()
    return state


_UPDATES = {
    "sgd": sgd_update,
    "mbgd": mbgd_update,
    "lms": lms_update,
    "orr": orr_update,
    "olr": olr_update,
    "rls": rls_update,
    "pa": pa_update,
    "olr_wa": olr_wa_update,
}


def partial_fit(state: LearnerState, batch: MiniBatch, config: LearnerConfig) -> LearnerState:
    """Dispatch one mini-batch to the configured update rule."""
    if config.algorithm not in _UPDATES:
        raise ValidationError(f"unknown algorithm {config.algorithm!r}")
    if state.algorithm != config.algorithm:
        raise ValidationError(
            f"state was initialized for {state.algorithm!r} but config says {config.algorithm!r}"
        )
    if len(batch) < 1:
        raise ValidationError("cannot fit an empty mini-batch")
    state = _UPDATES[config.algorithm](state, batch, config)
    state.n_seen += len(batch)
    return state


def model_record(state: LearnerState) -> dict:
    """Flat numeric snapshot of the current model."""
    return {
        "algorithm": state.algorithm,
        "d": state.model.n_dims,
        "weights": [float(v) for v in state.model.weights],
        "intercept": state.model.intercept,
        "n_seen": state.n_seen,
    }
