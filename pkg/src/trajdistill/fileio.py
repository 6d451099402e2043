"""Line-delimited text formats for datasets, targets, checkpoints, reports.

Every file starts with a JSON header line carrying the format name, the
format version, the record count, and an echo of the producing config.
Records are one JSON object per line with full-precision floats, so a
write/read round trip is bit-exact. Writes go through a temp file and an
atomic rename; identical inputs always produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import os

import numpy as np

from .errors import DataFormatError
from .gmm import GmmPrediction, TrajectorySample
from .metrics import MetricsReport
from .synthetic import AgentExample

FORMAT_VERSION = 1
DATASET_FORMAT = "trajdistill/dataset"
TARGETS_FORMAT = "trajdistill/targets"
CHECKPOINT_FORMAT = "trajdistill/checkpoint"
REPORT_FORMAT = "trajdistill/report"
CSV_FORMAT = "trajdistill/csv"


def _dump(obj) -> str:
    try:
        return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
    except ValueError as exc:
        raise DataFormatError(f"record is not serializable: {exc}") from exc


def atomic_write_text(path, text: str):
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_records(path, format_name: str, records, config=None):
    records = list(records)
    header = {
        "format": format_name,
        "version": FORMAT_VERSION,
        "count": len(records),
        "config": config or {},
    }
    lines = [_dump(header)]
    lines.extend(_dump(rec) for rec in records)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_records(path, format_name: str):
    path = os.fspath(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    if not lines:
        raise DataFormatError(f"{path}: line 1: missing header")
    header = _parse_line(path, lines, 0)
    if not isinstance(header, dict) or "format" not in header:
        raise DataFormatError(f"{path}: line 1: malformed header")
    if header["format"] != format_name:
        raise DataFormatError(
            f"{path}: expected format {format_name!r}, found {header['format']!r}"
        )
    if header.get("version") != FORMAT_VERSION:
        raise DataFormatError(
            f"{path}: unsupported format version {header.get('version')!r} "
            f"(this build reads version {FORMAT_VERSION})"
        )
    count = header.get("count")
    if not isinstance(count, int) or count < 0:
        raise DataFormatError(f"{path}: line 1: invalid record count {count!r}")
    records = []
    for i in range(count):
        line_no = i + 2
        if i + 1 >= len(lines) or not lines[i + 1].strip():
            raise DataFormatError(
                f"{path}: line {line_no}: unexpected end of file "
                f"(expected {count} records, found {i})"
            )
        records.append(_parse_line(path, lines, i + 1))
    for extra in range(count + 1, len(lines)):
        if lines[extra].strip():
            raise DataFormatError(
                f"{path}: line {extra + 1}: trailing data beyond declared record count"
            )
    return records, header


def _parse_line(path, lines, idx: int):
    try:
        return json.loads(lines[idx])
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: line {idx + 1}: invalid record: {exc.msg}") from exc


def _traj(value) -> list:
    return np.asarray(value, dtype=np.float64).tolist()


def write_dataset(path, examples, config=None):
    records = [
        {
            "example_id": ex.example_id,
            "scene_id": ex.scene_id,
            "bucket": ex.bucket,
            "features": ex.features.tolist(),
            "history": _traj(ex.history.points),
            "gt_future": _traj(ex.gt_future.points),
            "other_agents_gt": [_traj(o.points) for o in ex.other_agents_gt],
        }
        for ex in examples
    ]
    write_records(path, DATASET_FORMAT, records, config)


def read_dataset(path):
    records, header = read_records(path, DATASET_FORMAT)
    examples = []
    for i, rec in enumerate(records):
        try:
            examples.append(
                AgentExample(
                    example_id=rec["example_id"],
                    scene_id=rec["scene_id"],
                    bucket=rec["bucket"],
                    features=np.asarray(rec["features"], dtype=np.float64),
                    history=TrajectorySample(np.asarray(rec["history"], dtype=np.float64)),
                    gt_future=TrajectorySample(np.asarray(rec["gt_future"], dtype=np.float64)),
                    other_agents_gt=tuple(
                        TrajectorySample(np.asarray(o, dtype=np.float64))
                        for o in rec.get("other_agents_gt", [])
                    ),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}: line {i + 2}: bad example record: {exc}") from exc
    return examples, header


def write_targets(path, targets, config=None):
    """targets: iterable of (example_id, GmmPrediction) pairs."""
    records = [
        {
            "example_id": example_id,
            "weights": pred.weights.tolist(),
            "means": pred.means.tolist(),
            "stds": pred.stds.tolist(),
        }
        for example_id, pred in targets
    ]
    write_records(path, TARGETS_FORMAT, records, config)


def read_targets(path):
    records, header = read_records(path, TARGETS_FORMAT)
    targets = []
    for i, rec in enumerate(records):
        try:
            targets.append(
                (
                    rec["example_id"],
                    GmmPrediction(
                        weights=np.asarray(rec["weights"], dtype=np.float64),
                        means=np.asarray(rec["means"], dtype=np.float64),
                        stds=np.asarray(rec["stds"], dtype=np.float64),
                    ),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}: line {i + 2}: bad target record: {exc}") from exc
    return targets, header


def write_checkpoint(path, payload: dict, config=None):
    write_records(path, CHECKPOINT_FORMAT, [payload], config)


def read_checkpoint(path):
    records, header = read_records(path, CHECKPOINT_FORMAT)
    if len(records) != 1:
        raise DataFormatError(f"{path}: checkpoint must hold exactly one record")
    return records[0], header


def write_report(path, report: MetricsReport, config=None):
    write_records(path, REPORT_FORMAT, [report.to_dict()], config)


def read_report(path):
    records, header = read_records(path, REPORT_FORMAT)
    if len(records) != 1:
        raise DataFormatError(f"{path}: report must hold exactly one record")
    try:
        return MetricsReport.from_dict(records[0]), header
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: line 2: bad report record: {exc}") from exc


def write_csv(path, fieldnames, rows, config=None):
    """CSV with a leading '#'-prefixed JSON provenance line."""
    header = {"format": CSV_FORMAT, "version": FORMAT_VERSION, "config": config or {}}
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fieldnames), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    atomic_write_text(path, "# " + _dump(header) + "\n" + buf.getvalue())


def read_csv(path):
    """Rows as string dicts plus the parsed provenance header (or None)."""
    path = os.fspath(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    header = None
    start = 0
    while start < len(lines) and lines[start].startswith("#"):
        if header is None:
            try:
                header = json.loads(lines[start].lstrip("# "))
            except json.JSONDecodeError:
                header = None
        start += 1
    reader = csv.DictReader(io.StringIO("\n".join(lines[start:])))
    return list(reader), header
