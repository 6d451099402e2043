"""Trajectory Gaussian mixtures: types, density evaluation, temperature, sampling.

A prediction is a mixture of N trajectory modes. Each mode is a sequence of
T independent axis-aligned 2-d Gaussians (one per timestep) plus a mixing
weight. Density evaluation multiplies the per-step densities, so everything
runs in log space with a max-shifted log-sum-exp over modes.

All types are immutable after construction; operations are pure functions,
safe to call concurrently. Sampling takes an explicit seed per call instead
of sharing RNG state.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ValidationError

# Constructors accept weight sums this far from 1; validate() renormalizes.
WEIGHT_SUM_TOL = 1e-6
# Weights below this are floored before temperature scaling takes a log.
WEIGHT_FLOOR = 1e-12


def _frozen_array(value, dtype=np.float64):
    arr = np.array(value, dtype=dtype)
    arr.flags.writeable = False
    return arr


def trajectory_points(traj) -> np.ndarray:
    """Coerce a TrajectorySample or array-like to a float64 (T, 2) array."""
    if isinstance(traj, TrajectorySample):
        return traj.points
    pts = np.asarray(traj, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
        raise ValidationError(f"expected a (T, 2) trajectory, got shape {pts.shape}")
    return pts


@dataclass(frozen=True, eq=False)
class TrajectorySample:
    """One trajectory: a (T, 2) array of x/y positions in meters."""

    points: np.ndarray

    def __post_init__(self):
        pts = _frozen_array(self.points)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise ValidationError(
                f"trajectory must have shape (T, 2) with T >= 1, got {pts.shape}"
            )
        if not np.isfinite(pts).all():
            raise ValidationError("trajectory contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    @property
    def horizon(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class GaussianMode:
    """A single mixture component: weight, per-step means and stds."""

    weight: float
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        means = _frozen_array(self.means)
        stds = _frozen_array(self.stds)
        if means.ndim != 2 or means.shape[1] != 2 or means.shape[0] < 1:
            raise ValidationError(f"mode means must have shape (T, 2), got {means.shape}")
        if stds.shape != means.shape:
            raise ValidationError(
                f"mode stds shape {stds.shape} does not match means shape {means.shape}"
            )
        if not (np.isfinite(means).all() and np.isfinite(stds).all()):
            raise ValidationError("mode parameters contain non-finite values")
        if (stds <= 0.0).any():
            raise ValidationError("non-positive std in mode")
        weight = float(self.weight)
        if not np.isfinite(weight) or weight < 0.0 or weight > 1.0 + WEIGHT_SUM_TOL:
            raise ValidationError(f"mode weight must lie in [0, 1], got {weight}")
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)

    @property
    def horizon(self) -> int:
        return self.means.shape[0]


@dataclass(frozen=True, eq=False)
class GmmPrediction:
    """A trajectory mixture stored as stacked arrays.

    weights (N,), means (N, T, 2), stds (N, T, 2). Construction checks
    shapes, finiteness, nonnegative weights with sum within 1e-6 of 1, and
    strictly positive stds; validate() additionally renormalizes the
    weights to sum to exactly 1.
    """

    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        weights = _frozen_array(self.weights)
        means = _frozen_array(self.means)
        stds = _frozen_array(self.stds)
        if weights.ndim != 1 or weights.shape[0] < 1:
            raise ValidationError(f"weights must be a nonempty vector, got shape {weights.shape}")
        n = weights.shape[0]
        if means.ndim != 3 or means.shape[0] != n or means.shape[2] != 2 or means.shape[1] < 1:
            raise ValidationError(
                f"means must have shape ({n}, T, 2), got {means.shape}"
            )
        if stds.shape != means.shape:
            raise ValidationError(
                f"stds shape {stds.shape} does not match means shape {means.shape}"
            )
        if not (np.isfinite(weights).all() and np.isfinite(means).all() and np.isfinite(stds).all()):
            raise ValidationError("prediction contains non-finite values")
        if (weights < 0.0).any():
            raise ValidationError("negative mode weight")
        if (stds <= 0.0).any():
            raise ValidationError("non-positive std")
        total = float(weights.sum())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValidationError(
                f"mode weights must sum to 1 within {WEIGHT_SUM_TOL}, got {total!r}"
            )
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)

    @classmethod
    def from_modes(cls, modes) -> "GmmPrediction":
        modes = tuple(modes)
        if not modes:
            raise ValidationError("prediction needs at least one mode")
        horizons = {m.horizon for m in modes}
        if len(horizons) > 1:
            raise ValidationError(f"modes disagree on horizon: {sorted(horizons)}")
        return cls(
            weights=np.array([m.weight for m in modes]),
            means=np.stack([m.means for m in modes]),
            stds=np.stack([m.stds for m in modes]),
        )

    @property
    def modes(self) -> tuple:
        return tuple(
            GaussianMode(weight=float(w), means=m, stds=s)
            for w, m, s in zip(self.weights, self.means, self.stds)
        )

    @property
    def n_modes(self) -> int:
        return self.weights.shape[0]

    @property
    def horizon(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class EvalConfig:
    """Density-evaluation knobs: variance scale factor and temperature."""

    variance_scale: float = 1.0
    temperature: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.variance_scale) or self.variance_scale < 0.0:
            raise ValidationError(
                f"variance_scale must be nonnegative, got {self.variance_scale}"
            )
        if not np.isfinite(self.temperature) or self.temperature <= 0.0:
            raise ValidationError(f"temperature must be positive, got {self.temperature}")


def validate(pred: GmmPrediction) -> GmmPrediction:
    """Check all mixture invariants and renormalize weights to sum exactly 1.

    Structural violations (negative weights, non-positive stds, mismatched
    shapes, weight sum off by more than 1e-6) raise ValidationError, here or
    at construction. A weight sum within 1e-6 of 1 is divided out exactly.
    """
    if not isinstance(pred, GmmPrediction):
        raise ValidationError(f"expected a GmmPrediction, got {type(pred).__name__}")
    total = float(pred.weights.sum())
    if total == 1.0:
        return pred
    return dataclasses.replace(pred, weights=pred.weights / total)


def log_prob(pred: GmmPrediction, traj, cfg: EvalConfig = EvalConfig()) -> float:
    """Log-density of one trajectory under the mixture (Gaussian per step).

    Variances are multiplied by cfg.variance_scale, which must be positive
    for the density to exist.
    """
    return float(log_prob_batch(pred, trajectory_points(traj)[None], cfg)[0])


def log_prob_batch(pred: GmmPrediction, trajs, cfg: EvalConfig = EvalConfig()) -> np.ndarray:
    """Log-density of a (J, T, 2) stack of trajectories under the mixture."""
    if cfg.variance_scale == 0.0:
        raise ValidationError("density is undefined at variance_scale 0")
    trajs = np.asarray(trajs, dtype=np.float64)
    if trajs.ndim != 3 or trajs.shape[2] != 2:
        raise ValidationError(f"expected trajectories of shape (J, T, 2), got {trajs.shape}")
    if trajs.shape[1] != pred.horizon:
        raise ValidationError(
            f"trajectory horizon {trajs.shape[1]} does not match prediction horizon {pred.horizon}"
        )
    return _kernels.mixture_log_prob(
        pred.weights, pred.means, pred.stds, trajs, cfg.variance_scale
    )


def apply_temperature(pred: GmmPrediction, temperature: float) -> GmmPrediction:
    """Flatten (or sharpen) mode weights: w <- w**(1/temperature), renormalized.

    Weights below 1e-12 (including exact zeros) are floored to 1e-12 and the
    vector renormalized before the log is taken. temperature=1 returns the
    weights unchanged.
    """
    temperature = float(temperature)
    if not np.isfinite(temperature) or temperature <= 0.0:
        raise ValidationError(f"temperature must be positive, got {temperature}")
    weights = pred.weights
    if float(weights.min()) < WEIGHT_FLOOR:
        weights = np.maximum(weights, WEIGHT_FLOOR)
        weights = weights / weights.sum()
    if temperature == 1.0:
        if weights is pred.weights:
            return pred
        return dataclasses.replace(pred, weights=weights)
    scaled = np.log(weights) / temperature
    scaled -= scaled.max()
    out = np.exp(scaled)
    out /= out.sum()
    return dataclasses.replace(pred, weights=out)


def sample_points(
    pred: GmmPrediction, cfg: EvalConfig, rng_seed, count: int
) -> np.ndarray:
    """Draw `count` trajectories as a (count, T, 2) array.

    Mode indices come from a categorical draw on the weights; positions add
    per-step Gaussian noise with variance scaled by cfg.variance_scale. At
    variance_scale 0 the draws are exactly the selected modes' means. The
    same seed always yields the same draws.
    """
    count = int(count)
    if count < 1:
        raise ValidationError(f"sample count must be positive, got {count}")
    rng = np.random.default_rng(rng_seed)
    cum = np.cumsum(pred.weights)
    idx = np.searchsorted(cum, rng.random(count) * cum[-1], side="right")
    idx = np.minimum(idx, pred.n_modes - 1)
    noise = rng.standard_normal((count, pred.horizon, 2))
    scale = np.sqrt(cfg.variance_scale)
    return pred.means[idx] + scale * pred.stds[idx] * noise


def sample(pred: GmmPrediction, cfg: EvalConfig, rng_seed, count: int) -> tuple:
    """Like sample_points, wrapped as TrajectorySample values."""
    pts = sample_points(pred, cfg, rng_seed, count)
    return tuple(TrajectorySample(p) for p in pts)


def weight_entropy(pred: GmmPrediction) -> float:
    """Shannon entropy of the mode weights in nats; 0·log0 counts as 0."""
    w = pred.weights
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(w > 0.0, w * np.log(w), 0.0)
    return float(-terms.sum())
