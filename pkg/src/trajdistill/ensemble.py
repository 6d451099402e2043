"""Ensemble combination and non-maximal suppression of trajectory mixtures.

combine() takes K teacher mixtures, flattens their temperature-adjusted
modes into one mixture (weights w_k * pi_k), and nms_reduce() shrinks a
large mixture to a fixed mode count with a greedy coverage pass followed by
weighted K-means-style refinement with moment-matched stds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ValidationError
from .gmm import GmmPrediction, apply_temperature, _frozen_array

_DISTANCE_KINDS = {"mean_over_time": "mean", "final_point": "final"}


@dataclass(frozen=True, eq=False)
class EnsembleSpec:
    """K teacher mixtures with combination weights summing to 1."""

    teachers: tuple
    weights: np.ndarray

    def __post_init__(self):
        teachers = tuple(self.teachers)
        if not teachers:
            raise ValidationError("ensemble needs at least one teacher")
        for t in teachers:
            if not isinstance(t, GmmPrediction):
                raise ValidationError(f"teachers must be GmmPrediction, got {type(t).__name__}")
        horizons = {t.horizon for t in teachers}
        if len(horizons) > 1:
            raise ValidationError(f"teachers disagree on horizon: {sorted(horizons)}")
        weights = _frozen_array(self.weights)
        if weights.shape != (len(teachers),):
            raise ValidationError(
                f"expected {len(teachers)} ensemble weights, got shape {weights.shape}"
            )
        if not np.isfinite(weights).all() or (weights < 0.0).any():
            raise ValidationError("ensemble weights must be finite and nonnegative")
        total = float(weights.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"ensemble weights must sum to 1 within 1e-9, got {total!r}")
        object.__setattr__(self, "teachers", teachers)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, teachers) -> "EnsembleSpec":
        teachers = tuple(teachers)
        return cls(teachers, np.full(len(teachers), 1.0 / max(len(teachers), 1)))


@dataclass(frozen=True)
class NmsConfig:
    """Mode-reduction knobs.

    distance_kind "mean_over_time" compares mode mean trajectories by the
    root of the time-averaged squared displacement; "final_point" compares
    endpoints only. coverage_radius is in meters under either distance.
    """

    target_modes: int
    coverage_radius: float = 2.0
    refine_iters: int = 10
    distance_kind: str = "mean_over_time"

    def __post_init__(self):
        if self.target_modes < 1:
            raise ValidationError(f"target_modes must be >= 1, got {self.target_modes}")
        if not np.isfinite(self.coverage_radius) or self.coverage_radius <= 0.0:
            raise ValidationError(
                f"coverage_radius must be positive, got {self.coverage_radius}"
            )
        if self.refine_iters < 0:
            raise ValidationError(f"refine_iters must be >= 0, got {self.refine_iters}")
        if self.distance_kind not in _DISTANCE_KINDS:
            raise ValidationError(
                f"distance_kind must be one of {sorted(_DISTANCE_KINDS)}, got {self.distance_kind!r}"
            )


@dataclass(frozen=True, eq=False)
class NmsTrace:
    """Per-iteration refinement record kept for diagnostics and tests."""

    picked: tuple
    weight_sums: np.ndarray
    objectives: np.ndarray
    iterations: int


def combine(spec: EnsembleSpec, temperature: float = 1.0) -> GmmPrediction:
    """Union of all teachers' modes with weights w_k * pi_k.

    Temperature scaling is applied to each teacher independently before
    combination; the result's density is exactly the w_k-weighted sum of
    the (temperature-adjusted) teacher densities.
    """
    adjusted = [apply_temperature(t, temperature) for t in spec.teachers]
    weights = np.concatenate([w * t.weights for w, t in zip(spec.weights, adjusted)])
    means = np.concatenate([t.means for t in adjusted])
    stds = np.concatenate([t.stds for t in adjusted])
    return GmmPrediction(weights / weights.sum(), means, stds)


def nms_reduce(mixture: GmmPrediction, cfg: NmsConfig) -> GmmPrediction:
    """Reduce a mixture to exactly cfg.target_modes representative modes."""
    reduced, _ = _reduce(mixture, cfg, want_trace=False)
    return reduced


def nms_reduce_with_trace(mixture: GmmPrediction, cfg: NmsConfig):
    """nms_reduce plus an NmsTrace of picks, mass, and assignment cost."""
    return _reduce(mixture, cfg, want_trace=True)


def _reduce(mixture: GmmPrediction, cfg: NmsConfig, want_trace: bool):
    n = mixture.n_modes
    m = cfg.target_modes
    if m > n:
        raise ValidationError(
            f"target_modes {m} exceeds input mode count {n}"
        )
    weights = np.asarray(mixture.weights, dtype=np.float64)
    means = np.asarray(mixture.means, dtype=np.float64)
    stds = np.asarray(mixture.stds, dtype=np.float64)
    kind = _DISTANCE_KINDS[cfg.distance_kind]

    picked = _greedy_pick(weights, means, m, cfg.coverage_radius, kind)

    cent_means = means[picked].copy()
    cent_stds = stds[picked].copy()
    cent_weights = weights[picked].copy()
    rows = np.arange(n)
    prev_assign = None
    weight_sums = []
    objectives = []
    iterations = 0
    for _ in range(cfg.refine_iters):
        d2 = _kernels.pairwise_sq_dist(means, cent_means, kind)
        assign = d2.argmin(axis=1)
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        cluster_w = np.bincount(assign, weights=weights, minlength=m)
        mean_sums = np.zeros((m,) + means.shape[1:])
        np.add.at(mean_sums, assign, weights[:, None, None] * means)
        live = cluster_w > 0.0
        new_means = cent_means.copy()
        new_means[live] = mean_sums[live] / cluster_w[live, None, None]
        # merged variance = weighted mean of member variances plus weighted
        # spread of member means about the merged mean (law of total variance)
        second = np.zeros_like(mean_sums)
        np.add.at(
            second,
            assign,
            weights[:, None, None] * (stds**2 + (means - new_means[assign]) ** 2),
        )
        new_stds = cent_stds.copy()
        new_stds[live] = np.sqrt(second[live] / cluster_w[live, None, None])
        cent_means, cent_stds, cent_weights = new_means, new_stds, cluster_w
        if want_trace:
            weight_sums.append(float(cluster_w.sum()))
            objectives.append(float((weights * d2[rows, assign]).sum()))
        prev_assign = assign
        iterations += 1

    reduced = GmmPrediction(cent_weights / cent_weights.sum(), cent_means, cent_stds)
    trace = None
    if want_trace:
        trace = NmsTrace(
            picked=tuple(int(i) for i in picked),
            weight_sums=np.array(weight_sums),
            objectives=np.array(objectives),
            iterations=iterations,
        )
    return reduced, trace


def _greedy_pick(weights, means, m, radius, kind):
    """Max-coverage greedy selection with highest-weight padding.

    Repeatedly picks the uncovered mode whose within-radius neighborhood
    holds the most uncovered weight (ties to the lowest index). If coverage
    completes before m picks, the remaining slots go to the highest-weight
    modes not yet picked.
    """
    n = weights.shape[0]
    d2 = _kernels.pairwise_sq_dist(means, means, kind)
    within = d2 <= radius * radius
    covered = np.zeros(n, dtype=bool)
    picked = []
    while len(picked) < m and not covered.all():
        scores = within @ np.where(covered, 0.0, weights)
        scores[covered] = -np.inf
        pick = int(scores.argmax())
        picked.append(pick)
        covered |= within[pick]
    if len(picked) < m:
        rest = sorted(set(range(n)) - set(picked), key=lambda i: (-weights[i], i))
        picked.extend(rest[: m - len(picked)])
    return np.array(picked, dtype=np.intp)
