"""Multi-rater segmentation fusion with self-calibrated rater expertness."""

from . import fileio
from .baselines import (
    StapleConfig,
    empirical_class_prior,
    majority_vote,
    observed_log_likelihood,
    staple,
    symmetric_confusions,
    vote_counts,
)
from .calibrate import (
    HQConfig,
    HQState,
    RecurrenceConfig,
    RecurrenceStep,
    RecurrenceTrace,
    converged,
    hq_solve,
    recur,
)
from .errors import (
    DegenerateModelError,
    FileFormatError,
    InvalidClassError,
    LogDomainError,
    NumericalFailureError,
    RaterFuseError,
    ShapeMismatchError,
)
from .expertness import (
    ConfusionEstimate,
    estimate_confusion,
    expertness_from_estimate,
    predict_rater_labels,
    soft_confusion,
)
from .fusion import (
    ExpertnessMaps,
    FusionMode,
    RaterGenerativeModel,
    bayes_oracle,
    expertness_from_model,
    floor_confusion,
    fuse,
    self_fuse,
)
from .grids import (
    ClassGrid,
    GridShape,
    LabelStack,
    PriorMap,
    ProbMap,
    argmax_grid,
    one_hot,
    require_same_grid,
    uniform_prior,
)
from .metrics import (
    DiceSpec,
    SsimSpec,
    cross_entropy,
    dice,
    ssim,
    total_agreement,
)
from .synth import GoldSpec, RaterSpec, Rng, corrupt, make_gold

__version__ = "0.1.0"

__all__ = [
    "ClassGrid",
    "ConfusionEstimate",
    "DegenerateModelError",
    "DiceSpec",
    "ExpertnessMaps",
    "FileFormatError",
    "FusionMode",
    "GoldSpec",
    "GridShape",
    "HQConfig",
    "HQState",
    "InvalidClassError",
    "LabelStack",
    "LogDomainError",
    "NumericalFailureError",
    "PriorMap",
    "ProbMap",
    "RaterFuseError",
    "RaterGenerativeModel",
    "RaterSpec",
    "RecurrenceConfig",
    "RecurrenceStep",
    "RecurrenceTrace",
    "Rng",
    "ShapeMismatchError",
    "SsimSpec",
    "StapleConfig",
    "argmax_grid",
    "bayes_oracle",
    "converged",
    "corrupt",
    "cross_entropy",
    "dice",
    "empirical_class_prior",
    "estimate_confusion",
    "expertness_from_estimate",
    "expertness_from_model",
    "fileio",
    "floor_confusion",
    "fuse",
    "hq_solve",
    "majority_vote",
    "make_gold",
    "observed_log_likelihood",
    "one_hot",
    "predict_rater_labels",
    "recur",
    "require_same_grid",
    "self_fuse",
    "soft_confusion",
    "ssim",
    "staple",
    "symmetric_confusions",
    "total_agreement",
    "uniform_prior",
    "vote_counts",
]
