"""Distillation and ground-truth losses with analytic parameter gradients.

Value-level functions operate on GmmPrediction students. The gradient path
works on StudentParams, the unconstrained parameterization (weight logits,
raw means, log-stds) that the trainer optimizes. During loss evaluation the
student density always uses variance scale 1; the configured variance scale
only shapes teacher sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NumericalError, ValidationError
from .gmm import (
    EvalConfig,
    GmmPrediction,
    TrajectorySample,
    log_prob_batch,
    sample_points,
    trajectory_points,
)

STUDENT_EVAL = EvalConfig(variance_scale=1.0)


@dataclass(frozen=True)
class DistillConfig:
    """Knobs for the distillation objective.

    variance_scale controls teacher sampling: 0 selects the efficient
    mode-mean form, positive values draw sample_count noisy trajectories
    per example. use_bijection switches to the index-paired loss and
    requires equal teacher and student mode counts. temperature is applied
    when distillation targets are built, not inside the loss itself.
    """

    temperature: float = 8.0
    gt_weight: float = 0.4
    variance_scale: float = 0.5
    sample_count: int = 32
    use_bijection: bool = False

    def __post_init__(self):
        if not np.isfinite(self.temperature) or self.temperature <= 0.0:
            raise ValidationError(f"temperature must be positive, got {self.temperature}")
        if not np.isfinite(self.gt_weight) or self.gt_weight < 0.0:
            raise ValidationError(f"gt_weight must be nonnegative, got {self.gt_weight}")
        if not np.isfinite(self.variance_scale) or self.variance_scale < 0.0:
            raise ValidationError(
                f"variance_scale must be nonnegative, got {self.variance_scale}"
            )
        if self.sample_count < 1:
            raise ValidationError(f"sample_count must be >= 1, got {self.sample_count}")


@dataclass(frozen=True)
class LossBreakdown:
    """Distillation term, ground-truth term, and their weighted total."""

    distill_nll: float
    gt_loss: float
    total: float


@dataclass(frozen=True, eq=False)
class StudentParams:
    """Unconstrained GMM parameters: logits (N,), means and log-stds (N, T, 2)."""

    logits: np.ndarray
    means: np.ndarray
    log_stds: np.ndarray

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        means = np.asarray(self.means, dtype=np.float64)
        log_stds = np.asarray(self.log_stds, dtype=np.float64)
        if logits.ndim != 1 or logits.shape[0] < 1:
            raise ValidationError(f"logits must be a nonempty vector, got {logits.shape}")
        n = logits.shape[0]
        if means.ndim != 3 or means.shape[0] != n or means.shape[2] != 2:
            raise ValidationError(f"means must have shape ({n}, T, 2), got {means.shape}")
        if log_stds.shape != means.shape:
            raise ValidationError(
                f"log_stds shape {log_stds.shape} does not match means shape {means.shape}"
            )
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "log_stds", log_stds)

    @property
    def n_modes(self) -> int:
        return self.logits.shape[0]

    @property
    def horizon(self) -> int:
        return self.means.shape[1]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.logits, self.means.ravel(), self.log_stds.ravel()])

    @classmethod
    def from_vector(cls, vec, n_modes: int, horizon: int) -> "StudentParams":
        vec = np.asarray(vec, dtype=np.float64)
        block = n_modes * horizon * 2
        if vec.shape != (n_modes + 2 * block,):
            raise ValidationError(
                f"parameter vector has length {vec.shape}, expected {n_modes + 2 * block}"
            )
        return cls(
            logits=vec[:n_modes],
            means=vec[n_modes : n_modes + block].reshape(n_modes, horizon, 2),
            log_stds=vec[n_modes + block :].reshape(n_modes, horizon, 2),
        )

    def to_prediction(self) -> GmmPrediction:
        z = self.logits - self.logits.max()
        w = np.exp(z)
        return GmmPrediction(w / w.sum(), self.means, np.exp(self.log_stds))

    @classmethod
    def from_prediction(cls, pred: GmmPrediction) -> "StudentParams":
        return cls(
            logits=np.log(np.maximum(pred.weights, 1e-300)),
            means=pred.means.copy(),
            log_stds=np.log(pred.stds),
        )


def _check_horizon(student_horizon: int, other_horizon: int):
    if student_horizon != other_horizon:
        raise ValidationError(
            f"horizon mismatch: student has {student_horizon}, input has {other_horizon}"
        )


def _sample_array(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray) and samples.ndim == 3:
        return np.asarray(samples, dtype=np.float64)
    stacked = [trajectory_points(s) for s in samples]
    if not stacked:
        raise ValidationError("empty sample set")
    return np.stack(stacked)


def distill_nll_sampled(student: GmmPrediction, samples, cfg: EvalConfig = STUDENT_EVAL) -> float:
    """Summed negative log-density of teacher samples under the student."""
    pts = _sample_array(samples)
    if pts.shape[0] < 1:
        raise ValidationError("empty sample set")
    _check_horizon(student.horizon, pts.shape[1])
    lp = log_prob_batch(student, pts, cfg)
    loss = float(-lp.sum())
    if not np.isfinite(loss):
        raise NumericalError("sampled distillation loss is non-finite")
    return loss


def distill_nll_efficient(
    student: GmmPrediction, teacher: GmmPrediction, cfg: EvalConfig = STUDENT_EVAL
) -> float:
    """Teacher-weighted negative log-density of teacher mode means.

    The zero-variance-scale limit of the sampled loss in expectation: each
    teacher mode's mean trajectory acts as a sample weighted by its
    probability.
    """
    _check_horizon(student.horizon, teacher.horizon)
    lp = log_prob_batch(student, teacher.means, cfg)
    return float(-(teacher.weights * lp).sum())


def bijective_loss(
    student: GmmPrediction, teacher: GmmPrediction, cfg: EvalConfig = STUDENT_EVAL
) -> float:
    """Index-paired distillation for equal mode counts.

    Cross entropy between teacher and student weights plus the
    teacher-weighted per-mode Gaussian NLL of each teacher mean trajectory
    under the same-index student mode.
    """
    if student.n_modes != teacher.n_modes:
        raise ValidationError(
            f"mode-count mismatch: student has {student.n_modes}, teacher has {teacher.n_modes}"
        )
    _check_horizon(student.horizon, teacher.horizon)
    if cfg.variance_scale == 0.0:
        raise ValidationError("density is undefined at variance_scale 0")
    with np.errstate(divide="ignore"):
        log_w = np.log(student.weights)
    ce_terms = np.where(teacher.weights > 0.0, -teacher.weights * log_w, 0.0)
    var = cfg.variance_scale * student.stds**2
    diff = teacher.means - student.means
    nll = 0.5 * (diff**2 / var + np.log(var) + _kernels.LOG_TWO_PI).sum(axis=(1, 2))
    return float(ce_terms.sum() + (teacher.weights * nll).sum())


def gt_loss(student: GmmPrediction, gt, cfg: EvalConfig = STUDENT_EVAL) -> float:
    """Hard-assignment NLL of the ground-truth trajectory.

    The mode whose means are nearest to gt (time-averaged squared
    displacement, ties to the lowest index) pays -log weight plus the
    Gaussian NLL of gt under it.
    """
    pts = trajectory_points(gt)
    _check_horizon(student.horizon, pts.shape[0])
    if cfg.variance_scale == 0.0:
        raise ValidationError("density is undefined at variance_scale 0")
    d2 = ((student.means - pts[None]) ** 2).sum(axis=2).mean(axis=1)
    nstar = int(d2.argmin())
    var = cfg.variance_scale * student.stds[nstar] ** 2
    diff = pts - student.means[nstar]
    nll = 0.5 * (diff**2 / var + np.log(var) + _kernels.LOG_TWO_PI).sum()
    with np.errstate(divide="ignore"):
        log_w = float(np.log(student.weights[nstar]))
    return float(-log_w + nll)


def total_loss(
    student: GmmPrediction, teacher_or_samples, gt, cfg: DistillConfig, rng_seed=None
) -> LossBreakdown:
    """Distillation term (dispatched by config) plus weighted gt term.

    The distillation target may be a teacher GmmPrediction or, for the
    sampled variant, a pre-drawn (J, T, 2) sample stack; passing a teacher
    with a positive variance_scale draws cfg.sample_count samples from it
    and requires rng_seed.
    """
    distill = _distill_term_value(student, teacher_or_samples, cfg, rng_seed)
    gt_term = gt_loss(student, gt, STUDENT_EVAL)
    total = distill + cfg.gt_weight * gt_term
    return LossBreakdown(distill_nll=distill, gt_loss=gt_term, total=total)


def _require_teacher(teacher_or_samples) -> GmmPrediction:
    if not isinstance(teacher_or_samples, GmmPrediction):
        raise ValidationError(
            "this distillation variant needs a teacher GmmPrediction, got "
            f"{type(teacher_or_samples).__name__}"
        )
    return teacher_or_samples


def _resolve_samples(teacher_or_samples, cfg: DistillConfig, rng_seed) -> np.ndarray:
    if isinstance(teacher_or_samples, GmmPrediction):
        if rng_seed is None:
            raise ValidationError(
                "sampled distillation from a teacher needs an rng_seed (or pass samples)"
            )
        return sample_points(
            teacher_or_samples,
            EvalConfig(variance_scale=cfg.variance_scale),
            rng_seed,
            cfg.sample_count,
        )
    return _sample_array(teacher_or_samples)


def _distill_term_value(student, teacher_or_samples, cfg: DistillConfig, rng_seed) -> float:
    if cfg.use_bijection:
        return bijective_loss(student, _require_teacher(teacher_or_samples), STUDENT_EVAL)
    if cfg.variance_scale == 0.0:
        return distill_nll_efficient(student, _require_teacher(teacher_or_samples), STUDENT_EVAL)
    return distill_nll_sampled(
        student, _resolve_samples(teacher_or_samples, cfg, rng_seed), STUDENT_EVAL
    )


def total_loss_and_grad(
    params: StudentParams, teacher_or_samples, gt, cfg: DistillConfig, rng_seed=None
):
    """LossBreakdown plus the analytic gradient of the total loss.

    The gradient is a flat vector in StudentParams.to_vector() layout,
    taken with respect to logits, means, and log-stds.
    """
    logits = params.logits[None]
    means = params.means[None]
    log_stds = params.log_stds[None]

    if cfg.use_bijection:
        teacher = _require_teacher(teacher_or_samples)
        if params.n_modes != teacher.n_modes:
            raise ValidationError(
                f"mode-count mismatch: student has {params.n_modes}, teacher has {teacher.n_modes}"
            )
        _check_horizon(params.horizon, teacher.horizon)
        dist, dz, dm, dl = _kernels.batch_bijective_nll_grad(
            logits, means, log_stds, teacher.weights[None], teacher.means[None], 1.0
        )
    elif cfg.variance_scale == 0.0:
        teacher = _require_teacher(teacher_or_samples)
        _check_horizon(params.horizon, teacher.horizon)
        dist, dz, dm, dl = _kernels.batch_weighted_nll_grad(
            logits, means, log_stds, teacher.means[None], teacher.weights[None], 1.0
        )
    else:
        pts = _resolve_samples(teacher_or_samples, cfg, rng_seed)
        _check_horizon(params.horizon, pts.shape[1])
        dist, dz, dm, dl = _kernels.batch_weighted_nll_grad(
            logits, means, log_stds, pts[None], np.ones((1, pts.shape[0])), 1.0
        )

    gt_pts = trajectory_points(gt)
    _check_horizon(params.horizon, gt_pts.shape[0])
    gtv, gz, gm, gl = _kernels.batch_gt_nll_grad(logits, means, log_stds, gt_pts[None], 1.0)

    w = cfg.gt_weight
    grad = np.concatenate(
        [
            dz[0] + w * gz[0],
            (dm[0] + w * gm[0]).ravel(),
            (dl[0] + w * gl[0]).ravel(),
        ]
    )
    breakdown = LossBreakdown(
        distill_nll=float(dist[0]),
        gt_loss=float(gtv[0]),
        total=float(dist[0]) + w * float(gtv[0]),
    )
    if not (np.isfinite(breakdown.total) and np.isfinite(grad).all()):
        raise NumericalError("non-finite loss or gradient")
    return breakdown, grad


def grad_student(
    params: StudentParams, teacher_or_samples, gt, cfg: DistillConfig, rng_seed=None
) -> np.ndarray:
    """Gradient of total_loss with respect to the unconstrained parameters."""
    _, grad = total_loss_and_grad(params, teacher_or_samples, gt, cfg, rng_seed)
    return grad
