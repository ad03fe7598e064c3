"""Robust coordinate gradient descent for linear supervised learning.

Per-coordinate partial derivatives are estimated robustly (median-of-means,
trimmed mean, Catoni-Holland) and plugged into coordinate gradient descent,
so robustness to heavy tails and outliers costs about as much as plain
empirical-risk training.
"""

from .backend import get_backend
from .datagen import (
    CorruptionSpec,
    OracleInfo,
    SimSpec,
    corrupt_dataset,
    oracle_excess_risk,
    simulate,
)
from .dataio import (
    Column,
    Dataset,
    LabelScaler,
    Preprocessor,
    SplitSpec,
    load_csv,
    preprocess,
    save_csv,
    split,
)
from .grad_estimators import (
    DerivStream,
    GradientEstimator,
    error_vector_bound,
    estimate_gradient_moment_stats,
    full_gradient,
    geometric_median,
    partial_derivative,
)
from .losses import Loss, loss_derivative, loss_value, multiclass_scores_and_grad
from .rng import new_state
from .robust_scalar import (
    BlockPartition,
    EstimatorSpec,
    block_boundaries,
    blocks_from_confidence,
    estimate_ch,
    estimate_mom,
    estimate_mom_moment,
    estimate_tm,
    fisher_yates_permutation,
    median,
    mom_second_moment_upper_bound,
    mom_with_partition,
    quickselect,
    tm_eps_from_confidence,
)
from .solvers import (
    CYCLIC,
    IMPORTANCE,
    UNIFORM,
    DivergenceError,
    EstimatedMOM,
    FixedSteps,
    GivenLipschitz,
    RunRecord,
    SoftThreshold,
    SolverConfig,
    cgd_fit,
    estimate_step_sizes,
    gd_fit,
    oracle_gd_fit,
    soft_threshold,
)

__version__ = "0.1.0"

__all__ = [
    "get_backend",
    "new_state",
    "Loss",
    "loss_value",
    "loss_derivative",
    "multiclass_scores_and_grad",
    "EstimatorSpec",
    "BlockPartition",
    "block_boundaries",
    "fisher_yates_permutation",
    "quickselect",
    "median",
    "estimate_mom",
    "mom_with_partition",
    "estimate_tm",
    "estimate_ch",
    "estimate_mom_moment",
    "mom_second_moment_upper_bound",
    "blocks_from_confidence",
    "tm_eps_from_confidence",
    "DerivStream",
    "partial_derivative",
    "full_gradient",
    "GradientEstimator",
    "geometric_median",
    "error_vector_bound",
    "estimate_gradient_moment_stats",
    "SolverConfig",
    "SoftThreshold",
    "GivenLipschitz",
    "EstimatedMOM",
    "FixedSteps",
    "RunRecord",
    "DivergenceError",
    "cgd_fit",
    "gd_fit",
    "oracle_gd_fit",
    "estimate_step_sizes",
    "soft_threshold",
    "UNIFORM",
    "IMPORTANCE",
    "CYCLIC",
    "SimSpec",
    "OracleInfo",
    "CorruptionSpec",
    "simulate",
    "corrupt_dataset",
    "oracle_excess_risk",
    "Dataset",
    "Column",
    "SplitSpec",
    "load_csv",
    "save_csv",
    "split",
    "preprocess",
    "Preprocessor",
    "LabelScaler",
]
