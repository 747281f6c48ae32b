"""Significance engine for multi-model comparisons over multiple datasets.

Pipeline: fractional ranks per dataset, average rank per model, the Friedman
chi-square statistic, its Iman-Davenport F correction, an F critical value
(exact inverse CDF or table interpolation), and the Nemenyi critical
difference for pairwise verdicts. Decision boundaries use strict inequality:
a statistic exactly equal to its critical value retains the null.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

from .errors import (
    DegenerateStatisticError,
    DivergedCellWarning,
    LowPowerWarning,
    ValidationError,
)

CRITICAL_MODES = ("exact", "table")

# Upper 5% quantiles of the F distribution, columns df1 = 1..10. Deliberately
# small: just the rows needed to bracket df2 values in the 30..120 band, which
# is where (k-1)(N-1) lands for realistic benchmark sizes. Everything else
# goes through the exact mode.
F_TABLE_ALPHA = 0.05
F_TABLE = {
    30: (4.1709, 3.3158, 2.9223, 2.6896, 2.5336, 2.4205, 2.3343, 2.2662, 2.2107, 2.1646),
    40: (4.0847, 3.2317, 2.8387, 2.6060, 2.4495, 2.3359, 2.2490, 2.1802, 2.1240, 2.0772),
    60: (4.0012, 3.1504, 2.7581, 2.5252, 2.3683, 2.2541, 2.1665, 2.0970, 2.0401, 1.9926),
    120: (3.9201, 3.0718, 2.6802, 2.4472, 2.2899, 2.1750, 2.0868, 2.0164, 1.9588, 1.9105),
}

# Studentized-range-based multipliers for the Nemenyi test, indexed by the
# number of models compared. Requests outside this range are errors, not
# extrapolations.
Q_ALPHA = {
    0.05: {2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850, 7: 2.948, 8: 3.031},
    0.10: {2: 1.645, 3: 2.052, 4: 2.291, 5: 2.459, 6: 2.589, 7: 2.693, 8: 2.780},
}

QUANTILE_BISECTION_TOL = 1e-10


def rank_row(scores, lower_is_better: bool = True) -> np.ndarray:
    """Fractional (mid-rank) ranking of one dataset's scores; rank 1 is best."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size < 2:
        raise ValidationError(f"need a 1-D vector of >= 2 scores, got shape {scores.shape}")
    if not np.isfinite(scores).all():
        raise ValidationError("scores must be finite to be ranked")
    keys = scores if lower_is_better else -scores
    order = np.argsort(keys, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and keys[order[j + 1]] == keys[order[i]]:
            j += 1
        # positions i..j (0-based) share the mid-rank of ranks i+1..j+1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


@dataclass
class RankMatrix:
    """k x N grid of fractional ranks: models as rows, datasets as columns."""

    ranks: np.ndarray
    model_names: list[str]
    dataset_names: list[str]

    def __post_init__(self):
        self.ranks = np.asarray(self.ranks, dtype=np.float64)
        if self.ranks.ndim != 2:
            raise ValidationError(f"ranks must be 2-D, got shape {self.ranks.shape}")
        k, n = self.ranks.shape
        if len(self.model_names) != k or len(self.dataset_names) != n:
            raise ValidationError(
                f"label lengths ({len(self.model_names)}, {len(self.dataset_names)}) "
                f"do not match rank grid shape {self.ranks.shape}"
            )
        expected = k * (k + 1) / 2.0
        sums = self.ranks.sum(axis=0)
        if np.abs(sums - expected).max() > 1e-9:
            raise ValidationError(
                f"each dataset's ranks must sum to k(k+1)/2 = {expected}; got {sums.tolist()}"
            )
        if self.ranks.min() < 1.0 - 1e-12 or self.ranks.max() > k + 1e-12:
            raise ValidationError(f"ranks must lie within [1, {k}]")

    @property
    def k(self) -> int:
        return self.ranks.shape[0]

    @property
    def n_datasets(self) -> int:
        return self.ranks.shape[1]

    @property
    def average_ranks(self) -> np.ndarray:
        return self.ranks.mean(axis=1)

    @classmethod
    def from_scores(
        cls,
        scores: np.ndarray,
        model_names: list[str],
        dataset_names: list[str],
        lower_is_better: bool = True,
    ) -> "RankMatrix":
        """Rank every dataset column of a k x N score grid."""
        scores = np.asarray(scores, dtype=np.float64)
        if scores.ndim != 2:
            raise ValidationError(f"scores must be 2-D, got shape {scores.shape}")
        columns = [rank_row(scores[:, j], lower_is_better) for j in range(scores.shape[1])]
        return cls(
            ranks=np.column_stack(columns),
            model_names=list(model_names),
            dataset_names=list(dataset_names),
        )


def average_ranks(rank_matrix: RankMatrix) -> np.ndarray:
    return rank_matrix.average_ranks


def friedman_chi2(avg_ranks, k: int, n_datasets: int) -> float:
    """Friedman rank statistic from average ranks over n_datasets blocks."""
    avg_ranks = np.asarray(avg_ranks, dtype=np.float64)
    if avg_ranks.shape != (k,):
        raise ValidationError(f"expected {k} average ranks, got shape {avg_ranks.shape}")
    if k < 2:
        raise ValidationError(f"need at least 2 models, got k={k}")
    if n_datasets < 1:
        raise ValidationError(f"need at least 1 dataset, got N={n_datasets}")
    if k < 3:
        warnings.warn(
            f"Friedman test with k={k} models has very low power", LowPowerWarning, stacklevel=2
        )
    if n_datasets < 5:
        warnings.warn(
            f"Friedman test over N={n_datasets} datasets is unreliable", LowPowerWarning, stacklevel=2
        )
    total = float((avg_ranks**2).sum())
    return 12.0 * n_datasets / (k * (k + 1.0)) * (total - k * (k + 1.0) ** 2 / 4.0)


def iman_davenport(chi2: float, k: int, n_datasets: int) -> float:
    """Less conservative F-shaped correction of the Friedman statistic."""
    if chi2 < 0:
        raise ValidationError(f"chi2 must be >= 0, got {chi2}")
    denominator = n_datasets * (k - 1.0) - chi2
    if denominator <= 0:
        raise DegenerateStatisticError(
            f"chi2={chi2} reaches N(k-1)={n_datasets * (k - 1)}; rankings are "
            "(close to) identical across all datasets and the F correction is undefined"
        )
    return (n_datasets - 1.0) * chi2 / denominator


def f_cdf(x: float, df1: float, df2: float) -> float:
    """CDF of the F distribution via the regularized incomplete beta function."""
    if df1 <= 0 or df2 <= 0:
        raise ValidationError(f"degrees of freedom must be positive, got ({df1}, {df2})")
    if x <= 0:
        return 0.0
    t = df1 * x / (df1 * x + df2)
    return float(betainc(df1 / 2.0, df2 / 2.0, t))


def _f_quantile_exact(df1: float, df2: float, p: float) -> float:
    # expand the bracket, then bisect to a fixed absolute width
    hi = 1.0
    while f_cdf(hi, df1, df2) < p:
        hi *= 2.0
        if hi > 1e15:
            raise ValidationError(f"quantile p={p} out of reachable range for F({df1}, {df2})")
    lo = 0.0
    while hi - lo > QUANTILE_BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if f_cdf(mid, df1, df2) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _f_critical_table(df1: int, df2: float, alpha: float) -> float:
    if abs(alpha - F_TABLE_ALPHA) > 1e-12:
        raise ValidationError(f"table mode only covers alpha={F_TABLE_ALPHA}, got {alpha}")
    if df1 != int(df1) or not 1 <= int(df1) <= 10:
        raise ValidationError(f"table mode covers integer df1 in 1..10, got {df1}")
    grid = sorted(F_TABLE)
    if not grid[0] <= df2 <= grid[-1]:
        raise ValidationError(f"table mode covers df2 in [{grid[0]}, {grid[-1]}], got {df2}")
    column = int(df1) - 1
    if df2 in F_TABLE:
        return F_TABLE[int(df2)][column]
    below = max(g for g in grid if g < df2)
    above = min(g for g in grid if g > df2)
    lower, upper = F_TABLE[below][column], F_TABLE[above][column]
    return lower + (df2 - below) / (above - below) * (upper - lower)


def f_critical(df1: float, df2: float, alpha: float = 0.05, mode: str = "exact") -> float:
    """Upper-alpha critical value of the F(df1, df2) distribution."""
    if not 0 < alpha < 1:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    if df1 < 1 or df2 < 1:
        raise ValidationError(f"degrees of freedom must be >= 1, got ({df1}, {df2})")
    if mode == "exact":
        return _f_quantile_exact(df1, df2, 1.0 - alpha)
    if mode == "table":
        return _f_critical_table(df1, df2, alpha)
    raise ValidationError(f"unknown critical mode {mode!r}; expected one of {CRITICAL_MODES}")


def friedman_decision(ff: float, critical: float) -> bool:
    """Reject the all-models-equivalent hypothesis iff ff strictly exceeds critical."""
    if not (np.isfinite(ff) and np.isfinite(critical)):
        raise ValidationError(f"statistic and critical value must be finite, got ({ff}, {critical})")
    return ff > critical


@dataclass
class FriedmanResult:
    chi2: float
    ff: float
    df1: int
    df2: int
    alpha: float
    critical_value: float
    reject: bool
    critical_mode: str

    def to_dict(self) -> dict:
        return {
            "chi2": self.chi2,
            "ff": self.ff,
            "df1": self.df1,
            "df2": self.df2,
            "alpha": self.alpha,
            "critical_value": self.critical_value,
            "reject": self.reject,
            "critical_mode": self.critical_mode,
        }


def friedman_test(
    rank_matrix: RankMatrix, alpha: float = 0.05, critical_mode: str = "exact"
) -> FriedmanResult:
    """Full Friedman + Iman-Davenport decision for a rank grid."""
    k, n = rank_matrix.k, rank_matrix.n_datasets
    chi2 = friedman_chi2(rank_matrix.average_ranks, k, n)
    ff = iman_davenport(chi2, k, n)
    df1, df2 = k - 1, (k - 1) * (n - 1)
    critical = f_critical(df1, df2, alpha, critical_mode)
    return FriedmanResult(
        chi2=chi2,
        ff=ff,
        df1=df1,
        df2=df2,
        alpha=alpha,
        critical_value=critical,
        reject=friedman_decision(ff, critical),
        critical_mode=critical_mode,
    )


def nemenyi_cd(k: int, n_datasets: int, alpha: float = 0.05) -> float:
    """Minimum average-rank gap that separates two of k models over N datasets."""
    table = None
    for known, values in Q_ALPHA.items():
        if abs(alpha - known) < 1e-12:
            table = values
            break
    if table is None:
        raise ValidationError(f"alpha must be one of {sorted(Q_ALPHA)}, got {alpha}")
    if k not in table:
        raise ValidationError(f"k must be within {min(table)}..{max(table)}, got {k}")
    if n_datasets < 1:
        raise ValidationError(f"need at least 1 dataset, got {n_datasets}")
    return table[k] * float(np.sqrt(k * (k + 1.0) / (6.0 * n_datasets)))


def pairwise_rank_diffs(avg_ranks) -> np.ndarray:
    """k x k matrix of absolute average-rank differences."""
    avg_ranks = np.asarray(avg_ranks, dtype=np.float64)
    if avg_ranks.ndim != 1:
        raise ValidationError(f"average ranks must be 1-D, got shape {avg_ranks.shape}")
    return np.abs(avg_ranks[:, None] - avg_ranks[None, :])


def nemenyi_verdicts(diffs: np.ndarray, cd_by_alpha: dict[float, float]) -> dict[float, np.ndarray]:
    """Per-alpha boolean matrices: True where the rank gap strictly exceeds CD."""
    diffs = np.asarray(diffs, dtype=np.float64)
    if diffs.ndim != 2 or diffs.shape[0] != diffs.shape[1]:
        raise ValidationError(f"diffs must be square, got shape {diffs.shape}")
    if np.abs(diffs - diffs.T).max() > 1e-12 or np.abs(np.diagonal(diffs)).max() > 1e-12:
        raise ValidationError("diffs must be symmetric with a zero diagonal")
    return {alpha: diffs > cd for alpha, cd in cd_by_alpha.items()}


@dataclass
class NemenyiResult:
    model_names: list[str]
    q_alpha: dict[float, float]
    cd: dict[float, float]
    diffs: np.ndarray
    verdicts: dict[float, np.ndarray] = field(repr=False)

    def significant_pairs(self, alpha: float) -> list[tuple[str, str]]:
        matrix = self.verdicts[alpha]
        k = len(self.model_names)
        return [
            (self.model_names[i], self.model_names[j])
            for i in range(k)
            for j in range(i + 1, k)
            if matrix[i, j]
        ]

    def to_dict(self) -> dict:
        return {
            "model_names": list(self.model_names),
            "q_alpha": {str(a): q for a, q in self.q_alpha.items()},
            "cd": {str(a): c for a, c in self.cd.items()},
            "diffs": self.diffs.tolist(),
            "verdicts": {str(a): m.tolist() for a, m in self.verdicts.items()},
        }


def rank_score_matrix(score_matrix, lower_is_better: bool = True) -> RankMatrix:
    """Rank an evaluation score grid (or anything shaped like one).

    A dataset column containing any diverged cell is dropped entirely, with a
    warning, so every surviving column still compares all k models. Imputing
    ranks for diverged cells would silently distort the test statistic.
    """
    diverged = np.asarray(score_matrix.diverged, dtype=bool)
    keep = [j for j in range(diverged.shape[1]) if not diverged[:, j].any()]
    dropped = [score_matrix.dataset_ids[j] for j in range(diverged.shape[1]) if j not in keep]
    if dropped:
        warnings.warn(
            f"dropping dataset column(s) with diverged cells from ranking: {dropped}",
            DivergedCellWarning,
            stacklevel=2,
        )
    if not keep:
        raise ValidationError("every dataset column contains a diverged cell; nothing to rank")
    scores = np.asarray(score_matrix.scores, dtype=np.float64)[:, keep]
    return RankMatrix.from_scores(
        scores,
        list(score_matrix.model_ids),
        [score_matrix.dataset_ids[j] for j in keep],
        lower_is_better=lower_is_better,
    )


def nemenyi_test(rank_matrix: RankMatrix, alphas=(0.05, 0.10)) -> NemenyiResult:
    """Pairwise critical-difference verdicts at each requested alpha."""
    k, n = rank_matrix.k, rank_matrix.n_datasets
    cd = {alpha: nemenyi_cd(k, n, alpha) for alpha in alphas}
    q = {}
    for alpha in alphas:
        for known, values in Q_ALPHA.items():
            if abs(alpha - known) < 1e-12:
                q[alpha] = values[k]
    diffs = pairwise_rank_diffs(rank_matrix.average_ranks)
    return NemenyiResult(
        model_names=list(rank_matrix.model_names),
        q_alpha=q,
        cd=cd,
        diffs=diffs,
        verdicts=nemenyi_verdicts(diffs, cd),
    )
