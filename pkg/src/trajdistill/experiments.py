"""Experiment harnesses: evaluation wiring, scaling study, sweeps.

These functions connect the generator, trainer, ensemble, and metric
modules into the study shapes the command line exposes: an ensemble-size
scaling study with distilled students, a temperature sweep, and an
index-paired-versus-mixture loss comparison. Relative inference cost is
counted as exact floating-point operations of the toy models, which is
deterministic where wall-clock is not.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .ensemble import EnsembleSpec, NmsConfig, combine, nms_reduce
from .errors import ValidationError
from .losses import DistillConfig
from .metrics import MetricsReport, PredictionSet, compute_report
from .training import PipelineConfig, TrainConfig, build_ensemble_targets, train_student, train_teacher

METRIC_FIELDS = (
    "min_ade",
    "min_fde",
    "miss_rate",
    "map",
    "soft_map",
    "overlap",
    "brier_min_fde",
)

# Large-scale reference results for these harnesses, echoed in sweep output
# for context only; desk-scale runs are not expected to reproduce them and
# nothing asserts them.
REFERENCE_TEMPERATURE_OPTIMUM = 8.0
REFERENCE_LOSS_COMPARISON = {"min_ade": 0.53, "map": 0.43}


@dataclass(frozen=True)
class StudyConfig:
    """Desk-scale defaults for the scaling study and sweeps."""

    trials: int = 10
    ensemble_sizes: tuple = (1, 2, 4, 8)
    teacher_count: int = 8
    teacher_modes: int = 8
    target_modes: int = 6
    student_modes: int = 6
    eval_modes: int = 6
    hidden_dim: int = 32
    temperature: float = 8.0
    gt_weight: float = 0.4
    variance_scale: float = 0.0
    sample_count: int = 16
    nms_radius: float = 3.0
    student_hidden_dim: int = 128
    teacher_steps: int = 2000
    student_steps: int = 6000
    batch_size: int = 128
    learning_rate: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValidationError(f"trials must be >= 1, got {self.trials}")
        if not self.ensemble_sizes:
            raise ValidationError("ensemble_sizes must be nonempty")
        if max(self.ensemble_sizes) > self.teacher_count:
            raise ValidationError(
                f"largest ensemble size {max(self.ensemble_sizes)} exceeds "
                f"teacher_count {self.teacher_count}"
            )

    def teacher_train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            total_steps=self.teacher_steps,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            seed=seed,
        )

    def student_train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            total_steps=self.student_steps,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            seed=seed,
        )

    def distill_config(self, **overrides) -> DistillConfig:
        base = dict(
            temperature=self.temperature,
            gt_weight=self.gt_weight,
            variance_scale=self.variance_scale,
            sample_count=self.sample_count,
            use_bijection=False,
        )
        base.update(overrides)
        return DistillConfig(**base)

    def nms_config(self, target_modes: int) -> NmsConfig:
        return NmsConfig(target_modes=target_modes, coverage_radius=self.nms_radius)

    def pipeline(self, ensemble_size: int, **overrides) -> PipelineConfig:
        base = dict(
            ensemble_size=ensemble_size,
            teacher_modes=self.teacher_modes,
            target_modes=self.target_modes,
            student_modes=self.student_modes,
            eval_modes=self.eval_modes,
            hidden_dim=self.hidden_dim,
        )
        base.update(overrides)
        return PipelineConfig(**base)


def affine_flops(feature_dim: int, mode_count: int, horizon: int, hidden_dim: int = 0) -> int:
    """Exact per-example forward cost: head map, weight softmax, std exp.

    hidden_dim > 0 adds the frozen feature layer (matmul, bias, tanh).
    """
    p = mode_count * (1 + 4 * horizon)
    head_in = hidden_dim if hidden_dim > 0 else feature_dim
    expansion = (2 * feature_dim + 2) * hidden_dim if hidden_dim > 0 else 0
    return expansion + 2 * head_in * p + p + 3 * mode_count + 2 * mode_count * horizon


def model_flops(model) -> int:
    return affine_flops(model.feature_dim, model.mode_count, model.horizon, model.hidden_dim)


def model_prediction_sets(model, dataset, eval_modes: int, nms_cfg: NmsConfig | None = None):
    """Per-example k-trajectory prediction sets from one model."""
    feats = np.stack([ex.features for ex in dataset])
    logits, means, log_stds = model.forward(feats)
    sets = []
    reduce_cfg = nms_cfg or NmsConfig(target_modes=eval_modes)
    for i in range(len(dataset)):
        z = logits[i] - logits[i].max()
        w = np.exp(z)
        pred = _gmm(w / w.sum(), means[i], np.exp(log_stds[i]))
        if pred.n_modes > eval_modes:
            pred = nms_reduce(pred, reduce_cfg)
        sets.append(PredictionSet.from_gmm(pred, eval_modes))
    return sets


def ensemble_prediction_sets(
    teachers,
    dataset,
    eval_modes: int,
    temperature: float = 1.0,
    nms_cfg: NmsConfig | None = None,
):
    """Per-example prediction sets from a uniform ensemble of teachers."""
    feats = np.stack([ex.features for ex in dataset])
    heads = [t.forward(feats) for t in teachers]
    reduce_cfg = nms_cfg or NmsConfig(target_modes=eval_modes)
    sets = []
    for i in range(len(dataset)):
        preds = []
        for logits, means, log_stds in heads:
            z = logits[i] - logits[i].max()
            w = np.exp(z)
            preds.append(_gmm(w / w.sum(), means[i], np.exp(log_stds[i])))
        mixed = combine(EnsembleSpec.uniform(preds), temperature)
        if mixed.n_modes > eval_modes:
            mixed = nms_reduce(mixed, reduce_cfg)
        sets.append(PredictionSet.from_gmm(mixed, eval_modes))
    return sets


def _gmm(weights, means, stds):
    from .gmm import GmmPrediction

    return GmmPrediction(weights, means, stds)


def evaluate_sets(sets, dataset) -> MetricsReport:
    return compute_report(
        sets,
        [ex.gt_future for ex in dataset],
        [ex.bucket for ex in dataset],
        [ex.other_agents_gt for ex in dataset],
    )


def evaluate_model(model, dataset, eval_modes: int) -> MetricsReport:
    return evaluate_sets(model_prediction_sets(model, dataset, eval_modes), dataset)


def evaluate_ensemble(
    teachers,
    dataset,
    eval_modes: int,
    temperature: float = 1.0,
    nms_cfg: NmsConfig | None = None,
) -> MetricsReport:
    return evaluate_sets(
        ensemble_prediction_sets(teachers, dataset, eval_modes, temperature, nms_cfg), dataset
    )


def _row(kind, ensemble_size, trial, rel_flops, report):
    row = {
        "kind": kind,
        "ensemble_size": ensemble_size,
        "trial": trial,
        "rel_flops": rel_flops,
    }
    row.update({f: getattr(report, f) for f in METRIC_FIELDS})
    return row


def _trial_seed(base: int, trial: int, role: int) -> int:
    # spaced integer seeds: trial blocks of 1000, role blocks of 100
    return base + 1000 * (trial + 1) + 100 * role


def run_scaling_study(
    train_dataset, eval_dataset, cfg: StudyConfig, include_students: bool = True
) -> list:
    """Ensemble-size scaling with distilled students and a gt-only baseline.

    Per trial: train a shared pool of teachers, evaluate single teachers,
    nested ensembles over cfg.ensemble_sizes, students distilled from each
    ensemble, and one gt-only student. Returns one row per evaluation.
    include_students False skips all student training, leaving the teacher
    baseline and ensemble rows.
    """
    eval_nms = cfg.nms_config(cfg.eval_modes)
    rows = []
    for trial in range(cfg.trials):
        teachers = [
            train_teacher(
                train_dataset,
                cfg.teacher_train_config(seed=0),
                seed=_trial_seed(cfg.seed, trial, 0) + i,
                mode_count=cfg.teacher_modes,
                hidden_dim=cfg.hidden_dim,
            ).model
            for i in range(cfg.teacher_count)
        ]
        teacher_flops = model_flops(teachers[0])
        report = evaluate_sets(
            model_prediction_sets(teachers[0], eval_dataset, cfg.eval_modes, eval_nms),
            eval_dataset,
        )
        rows.append(_row("teacher", 1, trial, 1.0, report))

        student_tc = None
        if include_students:
            # all students in a trial share one seed so the gt-only baseline
            # and every distilled student start from identical parameters
            student_tc = cfg.student_train_config(seed=_trial_seed(cfg.seed, trial, 2))
            baseline = train_student(
                train_dataset,
                None,
                student_tc,
                None,
                mode_count=cfg.student_modes,
                hidden_dim=cfg.student_hidden_dim,
            ).model
            report = evaluate_model(baseline, eval_dataset, cfg.eval_modes)
            rows.append(
                _row("gt-student", 0, trial, model_flops(baseline) / teacher_flops, report)
            )

        for k in cfg.ensemble_sizes:
            members = teachers[:k]
            report = evaluate_ensemble(
                members, eval_dataset, cfg.eval_modes, nms_cfg=eval_nms
            )
            rows.append(_row("ensemble", k, trial, float(k), report))

            if not include_students:
                continue
            targets = build_ensemble_targets(
                train_dataset,
                members,
                cfg.pipeline(k),
                cfg.temperature,
                nms_cfg=cfg.nms_config(cfg.target_modes),
            )
            student = train_student(
                train_dataset,
                targets,
                student_tc,
                cfg.distill_config(),
                mode_count=cfg.student_modes,
                hidden_dim=cfg.student_hidden_dim,
            ).model
            report = evaluate_model(student, eval_dataset, cfg.eval_modes)
            rows.append(_row("student", k, trial, model_flops(student) / teacher_flops, report))
    return rows


def mean_rows(rows) -> list:
    """Collapse per-trial rows to per-(kind, ensemble_size) means."""
    groups: dict = {}
    for row in rows:
        groups.setdefault((row["kind"], row["ensemble_size"]), []).append(row)
    out = []
    for (kind, k), members in groups.items():
        agg = {
            "kind": kind,
            "ensemble_size": k,
            "trials": len(members),
            "rel_flops": float(np.mean([m["rel_flops"] for m in members])),
        }
        for f in METRIC_FIELDS:
            agg[f] = float(np.mean([m[f] for m in members]))
        out.append(agg)
    return out


def metric_means(rows, kind: str, ensemble_size: int | None = None) -> dict:
    """Mean metrics over trials for one row group."""
    members = [
        r
        for r in rows
        if r["kind"] == kind
        and (ensemble_size is None or r["ensemble_size"] == ensemble_size)
    ]
    if not members:
        raise ValidationError(f"no rows for kind={kind!r} ensemble_size={ensemble_size!r}")
    return {f: float(np.mean([m[f] for m in members])) for f in METRIC_FIELDS}


def run_temperature_sweep(train_dataset, eval_dataset, cfg: StudyConfig, temperatures) -> list:
    """Distill one student per temperature from a fixed teacher ensemble."""
    k = max(cfg.ensemble_sizes)
    teachers = [
        train_teacher(
            train_dataset,
            cfg.teacher_train_config(seed=0),
            seed=_trial_seed(cfg.seed, 0, 0) + i,
            mode_count=cfg.teacher_modes,
            hidden_dim=cfg.hidden_dim,
        ).model
        for i in range(k)
    ]
    rows = []
    for temperature in temperatures:
        targets = build_ensemble_targets(
            train_dataset,
            teachers,
            cfg.pipeline(k),
            float(temperature),
            nms_cfg=cfg.nms_config(cfg.target_modes),
        )
        student = train_student(
            train_dataset,
            targets,
            cfg.student_train_config(seed=_trial_seed(cfg.seed, 0, 4)),
            cfg.distill_config(temperature=float(temperature)),
            mode_count=cfg.student_modes,
            hidden_dim=cfg.student_hidden_dim,
        ).model
        report = evaluate_model(student, eval_dataset, cfg.eval_modes)
        row = {"temperature": float(temperature)}
        row.update({f: getattr(report, f) for f in METRIC_FIELDS})
        rows.append(row)
    return rows


def run_loss_comparison(train_dataset, eval_dataset, cfg: StudyConfig, wide_target_modes: int = 16) -> list:
    """Index-paired loss versus the mixture loss at matching and wider targets.

    The index-paired variant needs target and student mode counts equal, so
    it runs at the narrow and wide matching widths; the mixture variant runs
    at the matching width and with wide targets into a narrow student. All
    students are reduced to cfg.eval_modes for metrics.
    """
    k = max(cfg.ensemble_sizes)
    if wide_target_modes > k * cfg.teacher_modes:
        raise ValidationError(
            f"wide_target_modes {wide_target_modes} exceeds the combined mode count"
        )
    teachers = [
        train_teacher(
            train_dataset,
            cfg.teacher_train_config(seed=0),
            seed=_trial_seed(cfg.seed, 0, 0) + i,
            mode_count=cfg.teacher_modes,
            hidden_dim=cfg.hidden_dim,
        ).model
        for i in range(k)
    ]
    targets_by_width = {
        m: build_ensemble_targets(
            train_dataset,
            teachers,
            cfg.pipeline(k, target_modes=m),
            cfg.temperature,
            nms_cfg=cfg.nms_config(m),
        )
        for m in sorted({cfg.student_modes, wide_target_modes})
    }
    cases = [
        ("index-paired", cfg.student_modes, cfg.student_modes, True),
        ("index-paired", wide_target_modes, wide_target_modes, True),
        ("mixture", cfg.student_modes, cfg.student_modes, False),
        ("mixture", wide_target_modes, cfg.student_modes, False),
    ]
    rows = []
    for loss_kind, target_modes, student_modes, bijective in cases:
        student = train_student(
            train_dataset,
            targets_by_width[target_modes],
            cfg.student_train_config(seed=_trial_seed(cfg.seed, 0, 5)),
            cfg.distill_config(use_bijection=bijective),
            mode_count=student_modes,
            hidden_dim=cfg.student_hidden_dim,
        ).model
        report = evaluate_model(student, eval_dataset, cfg.eval_modes)
        row = {
            "loss_kind": loss_kind,
            "target_modes": target_modes,
            "student_modes": student_modes,
        }
        row.update({f: getattr(report, f) for f in METRIC_FIELDS})
        rows.append(row)
    return rows
