"""Ensemble, reduce, and distill multimodal trajectory predictors.

Predictions are Gaussian mixture models over future trajectories. The
package combines independently trained predictors into an ensemble
mixture, reduces it to a fixed mode budget with non-maximal suppression,
and distills the result into a single compact student, with the standard
motion-forecasting metric suite and a synthetic scenario generator for
desk-scale experiments.
"""

from ._kernels import backend_name
from .ensemble import EnsembleSpec, NmsConfig, NmsTrace, combine, nms_reduce, nms_reduce_with_trace
from .errors import DataFormatError, NumericalError, ValidationError
from .gmm import (
    EvalConfig,
    GaussianMode,
    GmmPrediction,
    TrajectorySample,
    apply_temperature,
    log_prob,
    log_prob_batch,
    sample,
    sample_points,
    validate,
    weight_entropy,
)
from .losses import (
    DistillConfig,
    LossBreakdown,
    StudentParams,
    bijective_loss,
    distill_nll_efficient,
    distill_nll_sampled,
    grad_student,
    gt_loss,
    total_loss,
    total_loss_and_grad,
)
from .metrics import (
    MetricsReport,
    PredictionSet,
    brier_min_fde,
    compute_report,
    map_and_soft_map,
    min_ade,
    min_fde,
    miss_rate,
    overlap,
)
from .synthetic import BUCKETS, AgentExample, ScenarioGenConfig, generate
from .training import (
    AdamW,
    PipelineConfig,
    StudentModel,
    TrainConfig,
    TrainResult,
    build_ensemble_targets,
    init_student,
    load_checkpoint,
    save_checkpoint,
    train_student,
    train_teacher,
)

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "AgentExample",
    "BUCKETS",
    "DataFormatError",
    "DistillConfig",
    "EnsembleSpec",
    "EvalConfig",
    "GaussianMode",
    "GmmPrediction",
    "LossBreakdown",
    "MetricsReport",
    "NmsConfig",
    "NmsTrace",
    "NumericalError",
    "PipelineConfig",
    "PredictionSet",
    "ScenarioGenConfig",
    "StudentModel",
    "StudentParams",
    "TrainConfig",
    "TrainResult",
    "TrajectorySample",
    "ValidationError",
    "apply_temperature",
    "backend_name",
    "bijective_loss",
    "brier_min_fde",
    "build_ensemble_targets",
    "combine",
    "compute_report",
    "distill_nll_efficient",
    "distill_nll_sampled",
    "generate",
    "grad_student",
    "gt_loss",
    "init_student",
    "load_checkpoint",
    "log_prob",
    "log_prob_batch",
    "map_and_soft_map",
    "min_ade",
    "min_fde",
    "miss_rate",
    "nms_reduce",
    "nms_reduce_with_trace",
    "overlap",
    "sample",
    "sample_points",
    "save_checkpoint",
    "total_loss",
    "total_loss_and_grad",
    "train_student",
    "train_teacher",
    "validate",
    "weight_entropy",
    "__version__",
]
