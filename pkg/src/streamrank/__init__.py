"""Benchmark online linear regressors on streaming data and rank them
with distribution-free significance tests."""

__version__ = "0.1.0"

from .data import (
    Dataset,
    FoldPlan,
    MiniBatch,
    ScalerParams,
    SyntheticSpec,
    apply_scaler,
    derive_seed,
    export_csv,
    fit_scaler,
    generate_synthetic,
    invert_scaler,
    kfold_split,
    load_csv,
    minibatch_stream,
)
from .errors import (
    ArchiveIntegrityError,
    ConditioningError,
    DegenerateStatisticError,
    DivergedCellWarning,
    DivergenceError,
    IngestionError,
    LowPowerWarning,
    ScalerStateError,
    StageError,
    StreamrankError,
    ValidationError,
)
from .evaluation import (
    DatasetPlan,
    MseTrace,
    RunPlan,
    ScoreMatrix,
    aggregate_cell,
    build_score_matrix,
    collect_traces,
    mse,
    prequential_run,
    score_matrix_from_traces,
)
from .experiment import (
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
from .learners import (
    ALGORITHMS,
    DISPLAY_NAMES,
    LearnerConfig,
    LearnerState,
    LinearModel,
    canonical_algorithm,
    combine_models,
    default_config,
    init,
    olr_wa_update,
    partial_fit,
    predict,
)
from .stats import (
    FriedmanResult,
    NemenyiResult,
    RankMatrix,
    f_critical,
    friedman_chi2,
    friedman_decision,
    friedman_test,
    iman_davenport,
    nemenyi_cd,
    nemenyi_test,
    nemenyi_verdicts,
    pairwise_rank_diffs,
    rank_row,
    rank_score_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "ArchiveIntegrityError",
    "ConditioningError",
    "Dataset",
    "DatasetConfig",
    "DatasetPlan",
    "DegenerateStatisticError",
    "DISPLAY_NAMES",
    "DivergedCellWarning",
    "DivergenceError",
    "FoldPlan",
    "FriedmanResult",
    "IngestionError",
    "LearnerConfig",
    "LearnerEntry",
    "LearnerState",
    "LinearModel",
    "LowPowerWarning",
    "MiniBatch",
    "MseTrace",
    "NemenyiResult",
    "RankMatrix",
    "ResultsArchive",
    "RunConfig",
    "RunPlan",
    "ScalerParams",
    "ScalerStateError",
    "ScoreMatrix",
    "StageError",
    "StreamrankError",
    "SyntheticSpec",
    "ValidationError",
    "aggregate_cell",
    "apply_scaler",
    "build_score_matrix",
    "canonical_algorithm",
    "collect_traces",
    "combine_models",
    "default_config",
    "derive_seed",
    "export_csv",
    "f_critical",
    "fit_scaler",
    "friedman_chi2",
    "friedman_decision",
    "friedman_test",
    "generate_synthetic",
    "iman_davenport",
    "init",
    "invert_scaler",
    "kfold_split",
    "load_archive",
    "load_csv",
    "load_preset",
    "minibatch_stream",
    "mse",
    "nemenyi_cd",
    "nemenyi_test",
    "nemenyi_verdicts",
    "olr_wa_update",
    "pairwise_rank_diffs",
    "partial_fit",
    "predict",
    "preset_names",
    "prequential_run",
    "rank_row",
    "rank_score_matrix",
    "run_experiment",
    "verify_integrity",
    "write_archive",
    "__version__",
]
