"""Teacher and student training: affine GMM heads fit by AdamW.

The toy model maps a handcrafted feature vector through an affine layer to
a full mixture parameter block (weight logits, means, log-stds). Teachers
differ only in their seeds; distilled students add a distillation term
against precomputed ensemble targets. Every run is deterministic for a
fixed seed: fixed init streams, fixed batch order, and fixed reduction
order in the gradient accumulation.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import _kernels, fileio
from .ensemble import EnsembleSpec, NmsConfig, combine, nms_reduce
from .errors import DataFormatError, NumericalError, ValidationError
from .gmm import EvalConfig, GmmPrediction, sample_points
from .losses import DistillConfig, StudentParams

# independent RNG streams derived from one training seed
_STREAM_INIT = 0
_STREAM_BATCH = 1
_STREAM_SAMPLES = 2
_STREAM_ANCHORS = 3

DEFAULT_ANCHOR_SCALE = 8.0
DEFAULT_INIT_LOG_STD = float(np.log(2.0))

# random-feature layer init; weights scale with 1/sqrt(feature_dim) so the
# tanh arguments stay spread over meter-scale inputs
RF_WEIGHT_SCALE = 0.3
RF_BIAS_SCALE = 1.0


@dataclass(frozen=True, eq=False)
class StudentModel:
    """Linear map from (optionally expanded) features to mixture parameters.

    The output vector packs [logits (N), means (N*T*2), log_stds (N*T*2)].
    With rf_weights/rf_bias set, inputs pass through a frozen random tanh
    layer first; only the head is ever trained, so each seed's random
    basis is a persistent property of the model.
    """

    feature_dim: int
    mode_count: int
    horizon: int
    weights: np.ndarray
    bias: np.ndarray
    rf_weights: np.ndarray | None = None
    rf_bias: np.ndarray | None = None

    def __post_init__(self):
        p = self.param_count
        weights = np.asarray(self.weights, dtype=np.float64)
        bias = np.asarray(self.bias, dtype=np.float64)
        if (self.rf_weights is None) != (self.rf_bias is None):
            raise ValidationError("rf_weights and rf_bias must be set together")
        if self.rf_weights is not None:
            rf_w = np.asarray(self.rf_weights, dtype=np.float64)
            rf_b = np.asarray(self.rf_bias, dtype=np.float64)
            if rf_w.ndim != 2 or rf_w.shape[0] != self.feature_dim:
                raise ValidationError(
                    f"rf_weights must have shape ({self.feature_dim}, D), got {rf_w.shape}"
                )
            if rf_b.shape != (rf_w.shape[1],):
                raise ValidationError(
                    f"rf_bias must have shape ({rf_w.shape[1]},), got {rf_b.shape}"
                )
            if not (np.isfinite(rf_w).all() and np.isfinite(rf_b).all()):
                raise ValidationError("model parameters contain non-finite values")
            object.__setattr__(self, "rf_weights", rf_w)
            object.__setattr__(self, "rf_bias", rf_b)
        if weights.shape != (self.head_dim, p):
            raise ValidationError(
                f"weights must have shape ({self.head_dim}, {p}), got {weights.shape}"
            )
        if bias.shape != (p,):
            raise ValidationError(f"bias must have shape ({p},), got {bias.shape}")
        if not (np.isfinite(weights).all() and np.isfinite(bias).all()):
            raise ValidationError("model parameters contain non-finite values")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)

    @property
    def param_count(self) -> int:
        return self.mode_count * (1 + 4 * self.horizon)

    @property
    def hidden_dim(self) -> int:
        return 0 if self.rf_weights is None else self.rf_weights.shape[1]

    @property
    def head_dim(self) -> int:
        return self.feature_dim if self.rf_weights is None else self.rf_weights.shape[1]

    def expand(self, features: np.ndarray) -> np.ndarray:
        """Head inputs for a (B, F) feature batch."""
        if self.rf_weights is None:
            return features
        return np.tanh(features @ self.rf_weights + self.rf_bias)

    def forward(self, features: np.ndarray):
        """Batched parameter heads: (logits, means, log_stds) for (B, F) input."""
        feats = np.asarray(features, dtype=np.float64)
        squeeze = feats.ndim == 1
        if squeeze:
            feats = feats[None]
        if feats.ndim != 2 or feats.shape[1] != self.feature_dim:
            raise ValidationError(
                f"expected features of shape (B, {self.feature_dim}), got {feats.shape}"
            )
        out = self.expand(feats) @ self.weights + self.bias
        n, t = self.mode_count, self.horizon
        block = n * t * 2
        logits = out[:, :n]
        means = out[:, n : n + block].reshape(-1, n, t, 2)
        log_stds = out[:, n + block :].reshape(-1, n, t, 2)
        return logits, means, log_stds

    def predict_params(self, features) -> StudentParams:
        logits, means, log_stds = self.forward(np.asarray(features, dtype=np.float64))
        return StudentParams(logits[0], means[0], log_stds[0])

    def predict(self, features) -> GmmPrediction:
        return self.predict_params(features).to_prediction()


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int
    learning_rate: float = 2e-4
    batch_size: int = 256
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    clip_norm: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.total_steps < 0:
            raise ValidationError(f"total_steps must be >= 0, got {self.total_steps}")
        if not np.isfinite(self.learning_rate) or self.learning_rate <= 0.0:
            raise ValidationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ValidationError("betas must lie in [0, 1)")
        if self.eps <= 0.0 or self.weight_decay < 0.0 or self.clip_norm <= 0.0:
            raise ValidationError("eps and clip_norm must be positive, weight_decay nonnegative")


@dataclass(frozen=True)
class PipelineConfig:
    """Mode-count bookkeeping for the teacher/ensemble/student pipeline."""

    ensemble_size: int
    teacher_modes: int = 64
    target_modes: int = 6
    student_modes: int = 6
    eval_modes: int = 6
    hidden_dim: int = 0

    def __post_init__(self):
        for name in ("ensemble_size", "teacher_modes", "target_modes", "student_modes", "eval_modes"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.hidden_dim < 0:
            raise ValidationError(f"hidden_dim must be >= 0, got {self.hidden_dim}")
        if self.target_modes > self.ensemble_size * self.teacher_modes:
            raise ValidationError(
                f"target_modes {self.target_modes} exceeds the combined mode count "
                f"{self.ensemble_size * self.teacher_modes}"
            )
        if self.eval_modes > self.student_modes:
            raise ValidationError(
                f"eval_modes {self.eval_modes} exceeds student_modes {self.student_modes}"
            )


@dataclass(frozen=True, eq=False)
class TrainResult:
    model: StudentModel
    loss_curve: np.ndarray
    steps: int


def lr_at(cfg: TrainConfig, step: int) -> float:
    """Linear decay from the initial rate to 0 over total_steps."""
    if cfg.total_steps == 0:
        return cfg.learning_rate
    return cfg.learning_rate * (1.0 - step / cfg.total_steps)


class AdamW:
    """Adam moments with bias correction and decoupled weight decay."""

    def __init__(self, size: int, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grads: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grads**2
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - lr * (m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * params)


def init_student(
    feature_dim: int,
    mode_count: int,
    horizon: int,
    seed: int,
    anchor_scale: float = DEFAULT_ANCHOR_SCALE,
    anchors: np.ndarray | None = None,
    hidden_dim: int = 0,
) -> StudentModel:
    """Random small weights plus bias anchors that fan the modes out.

    With anchors (mode_count, horizon, 2), each mode's bias means start at
    that trajectory; train_student passes trajectories sampled from the
    training set, so which behaviors get a nearby anchor depends on the
    seed. Without anchors, each mode traces a straight ray to a
    Gaussian-distributed endpoint. Either way the modes start apart, so
    the closest-mode dynamics can specialize them. hidden_dim > 0 adds a
    frozen random tanh feature layer drawn from the same seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, _STREAM_INIT)))
    p = mode_count * (1 + 4 * horizon)
    rf_weights = rf_bias = None
    head_dim = feature_dim
    if hidden_dim > 0:
        rf_weights = rng.normal(
            0.0, RF_WEIGHT_SCALE / np.sqrt(feature_dim), (feature_dim, hidden_dim)
        )
        rf_bias = rng.normal(0.0, RF_BIAS_SCALE, hidden_dim)
        head_dim = hidden_dim
    weights = rng.normal(0.0, 0.01, (head_dim, p))
    if anchors is None:
        endpoints = rng.normal(0.0, anchor_scale, (mode_count, 2))
        ramp = np.arange(1, horizon + 1) / horizon
        bias_means = endpoints[:, None, :] * ramp[None, :, None]
    else:
        bias_means = np.asarray(anchors, dtype=np.float64)
        if bias_means.shape != (mode_count, horizon, 2):
            raise ValidationError(
                f"anchors must have shape {(mode_count, horizon, 2)}, "
                f"got {bias_means.shape}"
            )
    bias = np.concatenate(
        [
            np.zeros(mode_count),
            bias_means.ravel(),
            np.full(mode_count * horizon * 2, DEFAULT_INIT_LOG_STD),
        ]
    )
    return StudentModel(feature_dim, mode_count, horizon, weights, bias, rf_weights, rf_bias)


def _stack_dataset(dataset):
    if not dataset:
        raise ValidationError("empty dataset")
    feats = np.stack([ex.features for ex in dataset])
    gts = np.stack([ex.gt_future.points for ex in dataset])
    return feats, gts


def _stack_targets(targets, count: int):
    if len(targets) != count:
        raise ValidationError(f"{len(targets)} targets for {count} examples")
    preds = [t[1] if isinstance(t, tuple) else t for t in targets]
    mode_counts = {p.n_modes for p in preds}
    if len(mode_counts) > 1:
        raise ValidationError(f"targets disagree on mode count: {sorted(mode_counts)}")
    t_weights = np.stack([p.weights for p in preds])
    t_means = np.stack([p.means for p in preds])
    t_stds = np.stack([p.stds for p in preds])
    return t_weights, t_means, t_stds


def _draw_batch_samples(rng, t_weights, t_means, t_stds, count, variance_scale):
    """(B, J, T, 2) teacher samples for one batch, one rng stream per step."""
    b, m = t_weights.shape
    cum = np.cumsum(t_weights, axis=1)
    u = rng.random((b, count)) * cum[:, -1:]
    idx = np.minimum(
        np.stack([np.searchsorted(cum[i], u[i], side="right") for i in range(b)]),
        m - 1,
    )
    rows = np.arange(b)[:, None]
    noise = rng.standard_normal((b, count) + t_means.shape[2:])
    return t_means[rows, idx] + np.sqrt(variance_scale) * t_stds[rows, idx] * noise


def train_student(
    dataset,
    targets,
    cfg: TrainConfig,
    dcfg: DistillConfig | None,
    *,
    mode_count: int,
    hidden_dim: int = 0,
) -> TrainResult:
    """Minimize the mean per-example loss with mini-batch AdamW.

    targets None trains on the ground-truth loss alone (the teacher
    recipe); otherwise each example's distillation target mixtures drive
    the configured distillation term plus the weighted gt term. Mode means
    initialize at trajectories sampled from the training set, so mode
    specialization depends on the seed's anchor draw. hidden_dim > 0
    trains the head over a frozen random tanh feature layer.
    """
    feats, gts = _stack_dataset(dataset)
    horizon = gts.shape[1]
    n_examples, feature_dim = feats.shape
    if targets is not None:
        if dcfg is None:
            raise ValidationError("distillation targets need a DistillConfig")
        t_weights, t_means, t_stds = _stack_targets(list(targets), n_examples)
        if t_means.shape[2] != horizon:
            raise ValidationError(
                f"target horizon {t_means.shape[2]} does not match dataset horizon {horizon}"
            )
        if dcfg.use_bijection and t_weights.shape[1] != mode_count:
            raise ValidationError(
                f"index-paired loss needs target mode count {t_weights.shape[1]} "
                f"to equal student mode count {mode_count}"
            )

    anchor_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _STREAM_ANCHORS)))
    anchor_idx = anchor_rng.choice(n_examples, size=mode_count, replace=n_examples < mode_count)
    model = init_student(
        feature_dim, mode_count, horizon, cfg.seed, anchors=gts[anchor_idx], hidden_dim=hidden_dim
    )
    head_inputs = model.expand(feats)
    in_dim = model.head_dim
    theta = np.concatenate([model.weights.ravel(), model.bias])
    opt = AdamW(theta.size, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)
    batch_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _STREAM_BATCH)))
    p = model.param_count
    losses = np.empty(cfg.total_steps)

    for step in range(cfg.total_steps):
        idx = batch_rng.integers(0, n_examples, cfg.batch_size)
        xb = head_inputs[idx]
        out = xb @ theta[: in_dim * p].reshape(in_dim, p) + theta[in_dim * p :]
        block = mode_count * horizon * 2
        logits = np.ascontiguousarray(out[:, :mode_count])
        means = np.ascontiguousarray(out[:, mode_count : mode_count + block]).reshape(
            -1, mode_count, horizon, 2
        )
        log_stds = np.ascontiguousarray(out[:, mode_count + block :]).reshape(
            -1, mode_count, horizon, 2
        )

        gt_l, gt_dz, gt_dm, gt_dl = _kernels.batch_gt_nll_grad(
            logits, means, log_stds, gts[idx], 1.0
        )
        if targets is None:
            batch_loss = gt_l
            dz, dm, dl = gt_dz, gt_dm, gt_dl
        else:
            if dcfg.use_bijection:
                d_l, dz, dm, dl = _kernels.batch_bijective_nll_grad(
                    logits, means, log_stds, t_weights[idx], t_means[idx], 1.0
                )
            elif dcfg.variance_scale == 0.0:
                d_l, dz, dm, dl = _kernels.batch_weighted_nll_grad(
                    logits, means, log_stds, t_means[idx], t_weights[idx], 1.0
                )
            else:
                step_rng = np.random.default_rng(
                    np.random.SeedSequence((cfg.seed, _STREAM_SAMPLES, step))
                )
                samples = _draw_batch_samples(
                    step_rng,
                    t_weights[idx],
                    t_means[idx],
                    t_stds[idx],
                    dcfg.sample_count,
                    dcfg.variance_scale,
                )
                d_l, dz, dm, dl = _kernels.batch_weighted_nll_grad(
                    logits,
                    means,
                    log_stds,
                    samples,
                    np.ones((len(idx), dcfg.sample_count)),
                    1.0,
                )
            w = dcfg.gt_weight
            batch_loss = d_l + w * gt_l
            dz = dz + w * gt_dz
            dm = dm + w * gt_dm
            dl = dl + w * gt_dl

        loss = float(batch_loss.mean())
        if not np.isfinite(loss):
            raise NumericalError(f"training diverged: non-finite loss at step {step}")
        losses[step] = loss

        g_out = np.concatenate(
            [dz, dm.reshape(len(idx), -1), dl.reshape(len(idx), -1)], axis=1
        )
        d_weights = xb.T @ g_out / len(idx)
        d_bias = g_out.mean(axis=0)
        grad = np.concatenate([d_weights.ravel(), d_bias])
        norm = float(np.linalg.norm(grad))
        if norm > cfg.clip_norm:
            grad *= cfg.clip_norm / norm
        theta = opt.step(theta, grad, lr_at(cfg, step))
        if not np.isfinite(theta).all():
            raise NumericalError(f"training diverged: non-finite parameters at step {step}")

    trained = StudentModel(
        feature_dim,
        mode_count,
        horizon,
        theta[: in_dim * p].reshape(in_dim, p),
        theta[in_dim * p :],
        model.rf_weights,
        model.rf_bias,
    )
    return TrainResult(model=trained, loss_curve=losses, steps=cfg.total_steps)


def train_teacher(
    dataset,
    cfg: TrainConfig,
    seed: int,
    *,
    mode_count: int,
    hidden_dim: int = 0,
) -> TrainResult:
    """Ground-truth-only training with an explicit seed (ensemble member)."""
    return train_student(
        dataset,
        None,
        dataclasses.replace(cfg, seed=seed),
        None,
        mode_count=mode_count,
        hidden_dim=hidden_dim,
    )


def build_ensemble_targets(
    dataset,
    teachers,
    pipeline: PipelineConfig,
    temperature: float,
    nms_cfg: NmsConfig | None = None,
):
    """Per-example reduced ensemble mixtures, as (example_id, GmmPrediction).

    Every teacher predicts each example; the predictions are temperature
    adjusted, combined with uniform ensemble weights, and reduced to
    pipeline.target_modes modes.
    """
    teachers = list(teachers)
    if len(teachers) != pipeline.ensemble_size:
        raise ValidationError(
            f"expected {pipeline.ensemble_size} teachers, got {len(teachers)}"
        )
    if nms_cfg is None:
        nms_cfg = NmsConfig(target_modes=pipeline.target_modes)
    elif nms_cfg.target_modes != pipeline.target_modes:
        raise ValidationError(
            f"nms target_modes {nms_cfg.target_modes} disagrees with pipeline "
            f"target_modes {pipeline.target_modes}"
        )
    feats = np.stack([ex.features for ex in dataset])
    per_teacher = [t.forward(feats) for t in teachers]
    targets = []
    for i, ex in enumerate(dataset):
        preds = [
            StudentParams(lg[i], mu[i], ls[i]).to_prediction()
            for lg, mu, ls in per_teacher
        ]
        mixed = combine(EnsembleSpec.uniform(preds), temperature)
        targets.append((ex.example_id, nms_reduce(mixed, nms_cfg)))
    return targets


def sample_targets(target: GmmPrediction, variance_scale: float, rng_seed, count: int):
    """Pre-drawn teacher samples for the sampled distillation variant."""
    return sample_points(target, EvalConfig(variance_scale=variance_scale), rng_seed, count)


def save_checkpoint(path, model: StudentModel, extra: dict | None = None, config=None):
    """Self-describing single-record checkpoint file."""
    payload = {
        "feature_dim": model.feature_dim,
        "mode_count": model.mode_count,
        "horizon": model.horizon,
        "weights": model.weights.tolist(),
        "bias": model.bias.tolist(),
        "rf_weights": None if model.rf_weights is None else model.rf_weights.tolist(),
        "rf_bias": None if model.rf_bias is None else model.rf_bias.tolist(),
        "extra": extra or {},
    }
    fileio.write_checkpoint(path, payload, config)


def _optional_array(value):
    return None if value is None else np.asarray(value, dtype=np.float64)


def load_checkpoint(path):
    payload, header = fileio.read_checkpoint(path)
    try:
        model = StudentModel(
            feature_dim=int(payload["feature_dim"]),
            mode_count=int(payload["mode_count"]),
            horizon=int(payload["horizon"]),
            weights=np.asarray(payload["weights"], dtype=np.float64),
            bias=np.asarray(payload["bias"], dtype=np.float64),
            rf_weights=_optional_array(payload.get("rf_weights")),
            rf_bias=_optional_array(payload.get("rf_bias")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: bad checkpoint payload: {exc}") from exc
    return model, payload.get("extra", {}), header
