"""Motion-forecasting metrics for k-trajectory prediction sets.

Displacement metrics (minADE, minFDE, miss rate, Brier-minFDE) follow the
standard challenge conventions; mAP and soft-mAP pool trajectories per
behavior bucket and integrate an 11-point interpolated precision-recall
curve; overlap uses a fixed-radius circle check against other agents'
ground truth. Distances are meters, thresholds default to 2.0 m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .gmm import GmmPrediction, _frozen_array, trajectory_points

MISS_THRESHOLD = 2.0
AGENT_RADIUS = 1.0
_AP_RECALL_GRID = np.linspace(0.0, 1.0, 11)


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """k candidate trajectories (k, T, 2) with confidences summing to 1."""

    trajectories: np.ndarray
    confidences: np.ndarray

    def __post_init__(self):
        trajs = _frozen_array(self.trajectories)
        conf = np.array(self.confidences, dtype=np.float64)
        if trajs.ndim != 3 or trajs.shape[2] != 2 or trajs.shape[0] < 1:
            raise ValidationError(
                f"trajectories must have shape (k, T, 2) with k >= 1, got {trajs.shape}"
            )
        if conf.shape != (trajs.shape[0],):
            raise ValidationError(
                f"expected {trajs.shape[0]} confidences, got shape {conf.shape}"
            )
        if not (np.isfinite(trajs).all() and np.isfinite(conf).all()):
            raise ValidationError("prediction set contains non-finite values")
        if (conf < 0.0).any():
            raise ValidationError("negative confidence")
        total = float(conf.sum())
        if abs(total - 1.0) > 1e-6:
            raise ValidationError(f"confidences must sum to 1 within 1e-6, got {total!r}")
        conf /= total
        conf.flags.writeable = False
        object.__setattr__(self, "trajectories", trajs)
        object.__setattr__(self, "confidences", conf)

    @property
    def k(self) -> int:
        return self.trajectories.shape[0]

    @property
    def horizon(self) -> int:
        return self.trajectories.shape[1]

    @classmethod
    def from_gmm(cls, pred: GmmPrediction, k: int | None = None) -> "PredictionSet":
        """Top-k modes by weight (mean trajectories), confidence-sorted."""
        if k is None:
            k = pred.n_modes
        if k < 1 or k > pred.n_modes:
            raise ValidationError(
                f"requested {k} trajectories from a {pred.n_modes}-mode prediction"
            )
        order = np.lexsort((np.arange(pred.n_modes), -pred.weights))[:k]
        conf = pred.weights[order]
        return cls(pred.means[order], conf / conf.sum())


@dataclass(frozen=True)
class MetricsReport:
    """Dataset-level metric summary."""

    min_ade: float
    min_fde: float
    miss_rate: float
    map: float
    soft_map: float
    overlap: float
    brier_min_fde: float
    example_count: int

    def __post_init__(self):
        slack = 1e-9
        if self.min_ade < -slack or self.min_fde < -slack:
            raise ValidationError("displacement metrics must be nonnegative")
        if not -slack <= self.miss_rate <= 1.0 + slack:
            raise ValidationError(f"miss_rate outside [0, 1]: {self.miss_rate}")
        if not -slack <= self.map <= self.soft_map + slack:
            raise ValidationError(
                f"expected 0 <= map <= soft_map, got map={self.map} soft_map={self.soft_map}"
            )
        if self.soft_map > 1.0 + slack:
            raise ValidationError(f"soft_map outside [0, 1]: {self.soft_map}")
        if self.brier_min_fde < self.min_fde - slack:
            raise ValidationError("brier_min_fde must be at least min_fde")

    def to_dict(self) -> dict:
        return {
            "min_ade": self.min_ade,
            "min_fde": self.min_fde,
            "miss_rate": self.miss_rate,
            "map": self.map,
            "soft_map": self.soft_map,
            "overlap": self.overlap,
            "brier_min_fde": self.brier_min_fde,
            "example_count": self.example_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        return cls(
            min_ade=float(data["min_ade"]),
            min_fde=float(data["min_fde"]),
            miss_rate=float(data["miss_rate"]),
            map=float(data["map"]),
            soft_map=float(data["soft_map"]),
            overlap=float(data["overlap"]),
            brier_min_fde=float(data["brier_min_fde"]),
            example_count=int(data["example_count"]),
        )


def _check_pair(pred: PredictionSet, gt_pts: np.ndarray):
    if pred.horizon != gt_pts.shape[0]:
        raise ValidationError(
            f"horizon mismatch: predictions have {pred.horizon}, gt has {gt_pts.shape[0]}"
        )


def _ade_per_trajectory(pred: PredictionSet, gt_pts: np.ndarray) -> np.ndarray:
    disp = np.linalg.norm(pred.trajectories - gt_pts[None], axis=2)
    return disp.mean(axis=1)


def _fde_per_trajectory(pred: PredictionSet, gt_pts: np.ndarray) -> np.ndarray:
    return np.linalg.norm(pred.trajectories[:, -1] - gt_pts[-1], axis=1)


def min_ade(pred: PredictionSet, gt) -> float:
    """Min over trajectories of the mean per-step displacement from gt."""
    gt_pts = trajectory_points(gt)
    _check_pair(pred, gt_pts)
    return float(_ade_per_trajectory(pred, gt_pts).min())


def min_fde(pred: PredictionSet, gt) -> float:
    """Min over trajectories of the final-step displacement from gt."""
    gt_pts = trajectory_points(gt)
    _check_pair(pred, gt_pts)
    return float(_fde_per_trajectory(pred, gt_pts).min())


def miss_rate(preds, gts, threshold: float = MISS_THRESHOLD) -> float:
    """Fraction of examples whose min_fde exceeds the threshold."""
    preds = list(preds)
    gts = list(gts)
    if len(preds) != len(gts):
        raise ValidationError(f"{len(preds)} prediction sets for {len(gts)} gt trajectories")
    if not preds:
        raise ValidationError("empty dataset")
    misses = sum(1 for p, g in zip(preds, gts) if min_fde(p, g) > threshold)
    return misses / len(preds)


def brier_min_fde(pred: PredictionSet, gt) -> float:
    """min_fde plus the squared confidence shortfall of the best-FDE trajectory."""
    gt_pts = trajectory_points(gt)
    _check_pair(pred, gt_pts)
    fde = _fde_per_trajectory(pred, gt_pts)
    best = int(fde.argmin())
    return float(fde[best] + (1.0 - pred.confidences[best]) ** 2)


def _bucket_ap(entries, n_examples: int, soft: bool) -> float:
    """11-point interpolated AP for one bucket's pooled trajectories.

    entries: (confidence, example index, matched flag) triples. The
    highest-confidence match per example is the true positive; later
    matches for the same example count as false positives for mAP and are
    dropped from the ranking entirely for soft-mAP.
    """
    order = sorted(range(len(entries)), key=lambda i: -entries[i][0])
    matched = set()
    tp, fp = [], []
    for i in order:
        _, ex, hit = entries[i]
        if hit and ex not in matched:
            matched.add(ex)
            tp.append(1)
            fp.append(0)
        elif hit and soft:
            continue
        else:
            tp.append(0)
            fp.append(1)
    if not tp:
        return 0.0
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(fp)
    recall = cum_tp / n_examples
    precision = cum_tp / (cum_tp + cum_fp)
    ap = 0.0
    for r in _AP_RECALL_GRID:
        reachable = precision[recall >= r - 1e-12]
        ap += float(reachable.max()) if reachable.size else 0.0
    return ap / len(_AP_RECALL_GRID)


def map_and_soft_map(preds, gts, buckets, threshold: float = MISS_THRESHOLD):
    """Mean average precision over behavior buckets, strict and soft.

    A trajectory matches when its FDE to its own example's gt is within the
    threshold. Returns (map, soft_map), each a mean of per-bucket APs over
    the buckets that appear in the dataset.
    """
    preds = list(preds)
    gts = list(gts)
    buckets = list(buckets)
    if not preds:
        raise ValidationError("empty dataset")
    if not len(preds) == len(gts) == len(buckets):
        raise ValidationError("preds, gts, and buckets must have equal lengths")
    pooled: dict = {}
    counts: dict = {}
    for ex, (pred, gt, bucket) in enumerate(zip(preds, gts, buckets)):
        gt_pts = trajectory_points(gt)
        _check_pair(pred, gt_pts)
        counts[bucket] = counts.get(bucket, 0) + 1
        fde = _fde_per_trajectory(pred, gt_pts)
        rows = pooled.setdefault(bucket, [])
        for conf, dist in zip(pred.confidences, fde):
            rows.append((float(conf), ex, bool(dist <= threshold)))
    strict = [_bucket_ap(rows, counts[b], soft=False) for b, rows in pooled.items()]
    soft = [_bucket_ap(rows, counts[b], soft=True) for b, rows in pooled.items()]
    return float(np.mean(strict)), float(np.mean(soft))


def overlap(preds, others_per_example, agent_radius: float = AGENT_RADIUS) -> float:
    """Fraction of examples whose top-confidence trajectory meets another agent.

    An example counts when that trajectory comes within 2 * agent_radius of
    any other agent's ground-truth position at the same timestep.
    """
    preds = list(preds)
    others_per_example = list(others_per_example)
    if len(preds) != len(others_per_example):
        raise ValidationError("preds and other-agent lists must have equal lengths")
    if not preds:
        raise ValidationError("empty dataset")
    limit = 2.0 * agent_radius
    hits = 0
    for pred, others in zip(preds, others_per_example):
        best = pred.trajectories[int(pred.confidences.argmax())]
        for other in others:
            other_pts = trajectory_points(other)
            if other_pts.shape[0] != pred.horizon:
                raise ValidationError("other-agent trajectory horizon mismatch")
            dist = np.linalg.norm(best - other_pts, axis=1)
            if (dist <= limit).any():
                hits += 1
                break
    return hits / len(preds)


def compute_report(
    preds,
    gts,
    buckets,
    others_per_example=None,
    miss_threshold: float = MISS_THRESHOLD,
    agent_radius: float = AGENT_RADIUS,
) -> MetricsReport:
    """Aggregate the full metric suite over a dataset."""
    preds = list(preds)
    gts = list(gts)
    if not preds:
        raise ValidationError("empty dataset")
    ades = [min_ade(p, g) for p, g in zip(preds, gts)]
    fdes = [min_fde(p, g) for p, g in zip(preds, gts)]
    briers = [brier_min_fde(p, g) for p, g in zip(preds, gts)]
    strict, soft = map_and_soft_map(preds, gts, buckets, threshold=miss_threshold)
    if others_per_example is None:
        overlap_rate = 0.0
    else:
        overlap_rate = overlap(preds, others_per_example, agent_radius=agent_radius)
    return MetricsReport(
        min_ade=float(np.mean(ades)),
        min_fde=float(np.mean(fdes)),
        miss_rate=miss_rate(preds, gts, threshold=miss_threshold),
        map=strict,
        soft_map=soft,
        overlap=overlap_rate,
        brier_min_fde=float(np.mean(briers)),
        example_count=len(preds),
    )
