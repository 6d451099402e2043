"""Command-line front end wiring the pipeline end-to-end.

Subcommands:
  gen-data           write a synthetic scenario dataset
  train-teachers     train an ensemble of teacher models
  build-targets      cache reduced ensemble mixtures per example
  distill            train a student against cached targets
  eval               score a checkpoint on a dataset
  sweep-temperature  temperature sweep plus the loss-variant comparison
  sweep-ensemble     ensemble-size scaling study

Every subcommand takes --config PATH (JSON, see _DEFAULTS for the schema),
--out DIR, --seed N (overrides each section's "seed"), and --quiet. The
resolved config is echoed into every output header, so reruns with the same
config and seed are byte-identical regardless of the output directory.
Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical
failure. Failures print a one-line JSON error record to stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import copy
import json
import os
import sys
from pathlib import Path

from . import fileio
from .ensemble import NmsConfig
from .errors import DataFormatError, NumericalError, ValidationError
from .experiments import (
    METRIC_FIELDS,
    REFERENCE_LOSS_COMPARISON,
    REFERENCE_TEMPERATURE_OPTIMUM,
    StudyConfig,
    evaluate_model,
    mean_rows,
    run_loss_comparison,
    run_scaling_study,
    run_temperature_sweep,
)
from .losses import DistillConfig
from .synthetic import ScenarioGenConfig, generate
from .training import (
    PipelineConfig,
    TrainConfig,
    build_ensemble_targets,
    load_checkpoint,
    save_checkpoint,
    train_student,
    train_teacher,
)

LOCK_NAME = ".trajdistill.lock"

# Sweep keys consumed by the harness itself rather than StudyConfig.
_SWEEP_EXTRA_KEYS = ("train_examples", "eval_examples", "temperatures", "wide_target_modes")

_DEFAULTS = {
    "scenario": {
        "example_count": 2000,
        "horizon": 16,
        "history_steps": 4,
        "maneuver_priors": [0.4, 0.2, 0.2, 0.1, 0.1],
        "noise_sigma": 1.0,
        "seed": 0,
    },
    "train": {
        "total_steps": 300,
        "learning_rate": 0.03,
        "batch_size": 128,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "weight_decay": 0.01,
        "clip_norm": 10.0,
        "seed": 0,
    },
    "distill": {
        "temperature": 8.0,
        "gt_weight": 0.4,
        "variance_scale": 0.5,
        "sample_count": 32,
        "use_bijection": False,
    },
    "pipeline": {
        "ensemble_size": 4,
        "teacher_modes": 8,
        "target_modes": 6,
        "student_modes": 6,
        "eval_modes": 6,
        "hidden_dim": 32,
    },
    "nms": {
        "coverage_radius": 2.0,
        "refine_iters": 10,
        "distance_kind": "mean_over_time",
    },
    "paths": {
        "dataset": "dataset.jsonl",
        "eval_dataset": "",
        "teacher_prefix": "teacher_",
        "targets": "targets.jsonl",
        "student": "student.json",
        "report": "report.json",
    },
    "sweep": {
        "trials": 3,
        "ensemble_sizes": [1, 2, 4, 8],
        "teacher_count": 8,
        "teacher_modes": 8,
        "target_modes": 6,
        "student_modes": 6,
        "eval_modes": 6,
        "hidden_dim": 32,
        "temperature": 8.0,
        "gt_weight": 0.4,
        "variance_scale": 0.0,
        "sample_count": 16,
        "nms_radius": 3.0,
        "student_hidden_dim": 128,
        "teacher_steps": 2000,
        "student_steps": 6000,
        "batch_size": 128,
        "learning_rate": 0.03,
        "seed": 0,
        "train_examples": 2000,
        "eval_examples": 500,
        "temperatures": [1.0, 2.0, 4.0, 8.0, 16.0],
        "wide_target_modes": 16,
    },
}


def _load_config(path):
    cfg = copy.deepcopy(_DEFAULTS)
    if path is None:
        return cfg
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file not found: {path}")
    try:
        user = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path} is not valid JSON: {exc.msg}") from exc
    if not isinstance(user, dict):
        raise ValidationError("config root must be a JSON object of sections")
    for section, values in user.items():
        if section not in cfg:
            raise ValidationError(
                f"unknown config section {section!r} (known: {', '.join(sorted(cfg))})"
            )
        if not isinstance(values, dict):
            raise ValidationError(f"config section {section!r} must be a JSON object")
        for key, value in values.items():
            if key not in cfg[section]:
                raise ValidationError(f"unknown key {key!r} in config section {section!r}")
            cfg[section][key] = value
    return cfg


def _apply_seed_override(cfg, seed: int):
    for section in ("scenario", "train", "sweep"):
        cfg[section]["seed"] = seed


@contextlib.contextmanager
def _output_lock(out_dir: Path):
    lock = out_dir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ValidationError(
            f"output directory {out_dir} is locked by another run "
            f"(remove {LOCK_NAME} if that run is dead)"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(OSError):
            os.unlink(lock)


def _say(quiet: bool, message: str):
    if not quiet:
        print(message)


def _scenario_config(cfg, **overrides) -> ScenarioGenConfig:
    values = dict(cfg["scenario"])
    values.update(overrides)
    values["maneuver_priors"] = tuple(values["maneuver_priors"])
    return ScenarioGenConfig(**values)


def _train_config(cfg, **overrides) -> TrainConfig:
    values = dict(cfg["train"])
    values.update(overrides)
    return TrainConfig(**values)


def _distill_config(cfg) -> DistillConfig:
    return DistillConfig(**cfg["distill"])


def _pipeline_config(cfg) -> PipelineConfig:
    return PipelineConfig(**cfg["pipeline"])


def _nms_config(cfg) -> NmsConfig:
    return NmsConfig(target_modes=cfg["pipeline"]["target_modes"], **cfg["nms"])


def _study_config(cfg) -> StudyConfig:
    values = {k: v for k, v in cfg["sweep"].items() if k not in _SWEEP_EXTRA_KEYS}
    values["ensemble_sizes"] = tuple(values["ensemble_sizes"])
    return StudyConfig(**values)


def _sweep_datasets(cfg):
    sweep = cfg["sweep"]
    base_seed = cfg["scenario"]["seed"]
    train_set = generate(_scenario_config(cfg, example_count=sweep["train_examples"]))
    eval_set = generate(
        _scenario_config(
            cfg, example_count=sweep["eval_examples"], seed=base_seed + 7919
        )
    )
    return train_set, eval_set


def _cmd_gen_data(cfg, out: Path, quiet: bool):
    examples = generate(_scenario_config(cfg))
    path = out / cfg["paths"]["dataset"]
    fileio.write_dataset(path, examples, config=cfg)
    _say(quiet, f"wrote {len(examples)} examples to {path}")


def _teacher_path(out: Path, cfg, index: int) -> Path:
    return out / f"{cfg['paths']['teacher_prefix']}{index:02d}.json"


def _cmd_train_teachers(cfg, out: Path, quiet: bool):
    dataset, _ = fileio.read_dataset(out / cfg["paths"]["dataset"])
    pipeline = _pipeline_config(cfg)
    tc = _train_config(cfg)
    for i in range(pipeline.ensemble_size):
        result = train_teacher(
            dataset,
            tc,
            seed=tc.seed + i,
            mode_count=pipeline.teacher_modes,
            hidden_dim=pipeline.hidden_dim,
        )
        path = _teacher_path(out, cfg, i)
        save_checkpoint(
            path,
            result.model,
            extra={"role": "teacher", "index": i, "final_loss": float(result.loss_curve[-1])},
            config=cfg,
        )
        _say(quiet, f"teacher {i}: final loss {result.loss_curve[-1]:.4f} -> {path}")


def _load_teachers(cfg, out: Path, count: int):
    teachers = []
    for i in range(count):
        model, _, _ = load_checkpoint(_teacher_path(out, cfg, i))
        teachers.append(model)
    return teachers


def _cmd_build_targets(cfg, out: Path, quiet: bool):
    dataset, _ = fileio.read_dataset(out / cfg["paths"]["dataset"])
    pipeline = _pipeline_config(cfg)
    teachers = _load_teachers(cfg, out, pipeline.ensemble_size)
    targets = build_ensemble_targets(
        dataset,
        teachers,
        pipeline,
        cfg["distill"]["temperature"],
        nms_cfg=_nms_config(cfg),
    )
    path = out / cfg["paths"]["targets"]
    fileio.write_targets(path, targets, config=cfg)
    _say(quiet, f"wrote {len(targets)} targets to {path}")


def _cmd_distill(cfg, out: Path, quiet: bool):
    dataset, _ = fileio.read_dataset(out / cfg["paths"]["dataset"])
    targets, _ = fileio.read_targets(out / cfg["paths"]["targets"])
    pipeline = _pipeline_config(cfg)
    result = train_student(
        dataset,
        targets,
        _train_config(cfg),
        _distill_config(cfg),
        mode_count=pipeline.student_modes,
        hidden_dim=pipeline.hidden_dim,
    )
    student_path = out / cfg["paths"]["student"]
    save_checkpoint(
        student_path,
        result.model,
        extra={"role": "student", "final_loss": float(result.loss_curve[-1])},
        config=cfg,
    )
    curve_rows = [
        {"step": i, "loss": float(v)} for i, v in enumerate(result.loss_curve)
    ]
    fileio.write_csv(out / "loss_curve.csv", ("step", "loss"), curve_rows, config=cfg)
    _say(quiet, f"student final loss {result.loss_curve[-1]:.4f} -> {student_path}")


def _cmd_eval(cfg, out: Path, quiet: bool):
    data_name = cfg["paths"]["eval_dataset"] or cfg["paths"]["dataset"]
    dataset, _ = fileio.read_dataset(out / data_name)
    model, _, _ = load_checkpoint(out / cfg["paths"]["student"])
    report = evaluate_model(model, dataset, _pipeline_config(cfg).eval_modes)
    path = out / cfg["paths"]["report"]
    fileio.write_report(path, report, config=cfg)
    _say(
        quiet,
        f"min_ade {report.min_ade:.4f}  miss_rate {report.miss_rate:.4f}  "
        f"soft_map {report.soft_map:.4f} -> {path}",
    )


def _cmd_sweep_temperature(cfg, out: Path, quiet: bool):
    study = _study_config(cfg)
    train_set, eval_set = _sweep_datasets(cfg)
    provenance = dict(cfg)
    provenance["reference"] = {
        "temperature_optimum": REFERENCE_TEMPERATURE_OPTIMUM,
        "loss_comparison": REFERENCE_LOSS_COMPARISON,
        "note": "large-scale benchmark results for context; not asserted here",
    }

    temp_rows = run_temperature_sweep(
        train_set, eval_set, study, cfg["sweep"]["temperatures"]
    )
    temp_path = out / "temperature_sweep.csv"
    fileio.write_csv(
        temp_path, ("temperature",) + METRIC_FIELDS, temp_rows, config=provenance
    )
    _say(quiet, f"wrote {len(temp_rows)} temperature rows to {temp_path}")

    loss_rows = run_loss_comparison(
        train_set, eval_set, study, cfg["sweep"]["wide_target_modes"]
    )
    loss_path = out / "compare_loss.csv"
    fileio.write_csv(
        loss_path,
        ("loss_kind", "target_modes", "student_modes") + METRIC_FIELDS,
        loss_rows,
        config=provenance,
    )
    _say(quiet, f"wrote {len(loss_rows)} loss-comparison rows to {loss_path}")
    _say(
        quiet,
        f"reference (large-scale, not asserted): optimum temperature "
        f"{REFERENCE_TEMPERATURE_OPTIMUM:g}, mixture-loss min_ade "
        f"{REFERENCE_LOSS_COMPARISON['min_ade']:g}, map "
        f"{REFERENCE_LOSS_COMPARISON['map']:g}",
    )


def _cmd_sweep_ensemble(cfg, out: Path, quiet: bool):
    study = _study_config(cfg)
    train_set, eval_set = _sweep_datasets(cfg)
    rows = run_scaling_study(train_set, eval_set, study)
    aggregated = mean_rows(rows)
    path = out / "ensemble_sweep.csv"
    fileio.write_csv(
        path,
        ("kind", "ensemble_size", "trials", "rel_flops") + METRIC_FIELDS,
        aggregated,
        config=cfg,
    )
    _say(quiet, f"wrote {len(aggregated)} aggregated rows to {path}")


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train-teachers": _cmd_train_teachers,
    "build-targets": _cmd_build_targets,
    "distill": _cmd_distill,
    "eval": _cmd_eval,
    "sweep-temperature": _cmd_sweep_temperature,
    "sweep-ensemble": _cmd_sweep_ensemble,
}

_HELP = {
    "gen-data": "generate a synthetic scenario dataset",
    "train-teachers": "train the teacher ensemble on a dataset",
    "build-targets": "cache reduced ensemble target mixtures",
    "distill": "train a student model against cached targets",
    "eval": "compute the metric report for a checkpoint",
    "sweep-temperature": "temperature sweep and loss-variant comparison",
    "sweep-ensemble": "ensemble-size scaling study",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajdistill",
        description="ensemble, reduce, and distill trajectory mixture predictors",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="subcommand")
    for name, help_text in _HELP.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument(
            "--seed", type=int, default=None, help="override every section's seed"
        )
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def _fail(code: int, error: str, message: str) -> int:
    record = {"error": error, "exit_code": code, "message": message}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return 0
        return _fail(1, "UsageError", "invalid command line (see usage above)")
    try:
        cfg = _load_config(args.config)
        if args.seed is not None:
            _apply_seed_override(cfg, args.seed)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with _output_lock(out_dir):
            _COMMANDS[args.subcommand](cfg, out_dir, args.quiet)
    except ValidationError as exc:
        return _fail(1, type(exc).__name__, str(exc))
    except NumericalError as exc:
        return _fail(3, type(exc).__name__, str(exc))
    except (DataFormatError, OSError) as exc:
        return _fail(2, type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
