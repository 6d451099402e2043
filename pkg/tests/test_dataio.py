"""File formats: round-trip identity, corruption diagnostics, atomicity."""

import json
import math
import os

import numpy as np
import pytest

from trajdistill.errors import DataFormatError
from trajdistill.fileio import (
    FORMAT_VERSION,
    read_checkpoint,
    read_csv,
    read_dataset,
    read_records,
    read_report,
    read_targets,
    write_checkpoint,
    write_csv,
    write_dataset,
    write_records,
    write_report,
    write_targets,
)
from trajdistill.metrics import MetricsReport

from conftest import make_gmm


class TestDatasetRoundTrip:
    def test_bit_identical(self, tmp_path, small_dataset):
        path = tmp_path / "data.jsonl"
        write_dataset(path, small_dataset, config={"seed": 11})
        back, header = read_dataset(path)
        assert header["config"] == {"seed": 11}
        assert header["count"] == len(small_dataset)
        assert len(back) == len(small_dataset)
        for a, b in zip(small_dataset, back):
            assert a.example_id == b.example_id
            assert a.scene_id == b.scene_id
            assert a.bucket == b.bucket
            assert np.array_equal(a.features, b.features)
            assert np.array_equal(a.history.points, b.history.points)
            assert np.array_equal(a.gt_future.points, b.gt_future.points)
            assert len(a.other_agents_gt) == len(b.other_agents_gt)
            for oa, ob in zip(a.other_agents_gt, b.other_agents_gt):
                assert np.array_equal(oa.points, ob.points)

    def test_empty_dataset_with_valid_header(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        write_dataset(path, [])
        back, header = read_dataset(path)
        assert back == []
        assert header["count"] == 0

    def test_awkward_floats_survive(self, tmp_path, small_dataset):
        ex = small_dataset[0]
        hacked = type(ex)(
            example_id=ex.example_id,
            scene_id=ex.scene_id,
            bucket=ex.bucket,
            features=np.array([0.1 + 0.2, 1e-300, math.pi] + [0.0] * 10),
            history=ex.history,
            gt_future=ex.gt_future,
            other_agents_gt=ex.other_agents_gt,
        )
        path = tmp_path / "f.jsonl"
        write_dataset(path, [hacked])
        back, _ = read_dataset(path)
        assert np.array_equal(back[0].features, hacked.features)


class TestTargetsRoundTrip:
    def test_bit_identical(self, tmp_path, rng):
        targets = [(f"ex-{i}", make_gmm(rng, 6, 16)) for i in range(4)]
        path = tmp_path / "targets.jsonl"
        write_targets(path, targets)
        back, _ = read_targets(path)
        for (aid, apred), (bid, bpred) in zip(targets, back):
            assert aid == bid
            assert np.array_equal(apred.weights, bpred.weights)
            assert np.array_equal(apred.means, bpred.means)
            assert np.array_equal(apred.stds, bpred.stds)


class TestCheckpointAndReport:
    def test_checkpoint_round_trip(self, tmp_path):
        payload = {"weights": [[1.0, 2.5e-11], [0.25, -3.0]], "note": "x"}
        path = tmp_path / "ckpt.jsonl"
        write_checkpoint(path, payload, config={"steps": 5})
        back, header = read_checkpoint(path)
        assert back == payload
        assert header["config"] == {"steps": 5}

    def test_report_round_trip(self, tmp_path):
        report = MetricsReport(1.25, 2.5, 0.5, 0.25, 0.5, 0.1, 2.75, 4)
        path = tmp_path / "report.jsonl"
        write_report(path, report)
        back, _ = read_report(path)
        assert back == report

    def test_report_multiple_records_rejected(self, tmp_path):
        path = tmp_path / "r.jsonl"
        write_records(path, "trajdistill/report", [{"a": 1}, {"a": 2}])
        with pytest.raises(DataFormatError):
            read_report(path)


class TestCsv:
    def test_round_trip_with_provenance(self, tmp_path):
        path = tmp_path / "out.csv"
        rows = [{"k": 1, "v": 0.125}, {"k": 2, "v": -3.5}]
        write_csv(path, ["k", "v"], rows, config={"trials": 3})
        back, header = read_csv(path)
        assert header["config"] == {"trials": 3}
        assert back == [{"k": "1", "v": "0.125"}, {"k": "2", "v": "-3.5"}]

    def test_plain_csv_reads_without_header(self, tmp_path):
        path = tmp_path / "plain.csv"
        path.write_text("a,b\n1,2\n")
        back, header = read_csv(path)
        assert header is None
        assert back == [{"a": "1", "b": "2"}]


class TestCorruption:
    def write_sample(self, path, n=3):
        write_records(path, "trajdistill/dataset", [{"i": i} for i in range(n)])

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFormatError):
            read_records(tmp_path / "absent.jsonl", "trajdistill/dataset")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(DataFormatError, match="line 1: missing header"):
            read_records(path, "trajdistill/dataset")

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text("[1, 2, 3]\n")
        with pytest.raises(DataFormatError, match="line 1: malformed header"):
            read_records(path, "trajdistill/dataset")

    def test_truncation_names_failing_line(self, tmp_path):
        path = tmp_path / "trunc.jsonl"
        self.write_sample(path, n=3)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(DataFormatError, match=r"line 4: unexpected end of file"):
            read_records(path, "trajdistill/dataset")
        with pytest.raises(DataFormatError, match=r"expected 3 records, found 2"):
            read_records(path, "trajdistill/dataset")

    def test_trailing_data_rejected(self, tmp_path):
        path = tmp_path / "extra.jsonl"
        self.write_sample(path, n=2)
        with open(path, "a") as fh:
            fh.write('{"i": 99}\n')
        with pytest.raises(DataFormatError, match=r"line 4: trailing data"):
            read_records(path, "trajdistill/dataset")

    def test_invalid_json_line(self, tmp_path):
        path = tmp_path / "badline.jsonl"
        self.write_sample(path, n=2)
        lines = path.read_text().splitlines()
        lines[2] = "{not json"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataFormatError, match=r"line 3: invalid record"):
            read_records(path, "trajdistill/dataset")

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "old.jsonl"
        self.write_sample(path, n=1)
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        header["version"] = FORMAT_VERSION + 1
        lines[0] = json.dumps(header)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataFormatError, match="unsupported format version"):
            read_records(path, "trajdistill/dataset")

    def test_wrong_format_name(self, tmp_path, rng):
        path = tmp_path / "targets.jsonl"
        write_targets(path, [("a", make_gmm(rng, 2, 3))])
        with pytest.raises(DataFormatError, match="expected format"):
            read_dataset(path)

    def test_bad_record_shape_names_line(self, tmp_path):
        path = tmp_path / "badrec.jsonl"
        write_records(
            path,
            "trajdistill/targets",
            [{"example_id": "a", "weights": [1.0], "means": [[[0, 0]]], "stds": [[[1, 1]]]},
             {"example_id": "b", "weights": [1.0]}],
        )
        with pytest.raises(DataFormatError, match="line 3: bad target record"):
            read_targets(path)


class TestAtomicity:
    def test_no_temp_residue(self, tmp_path):
        path = tmp_path / "clean.jsonl"
        self_dir = set(os.listdir(tmp_path))
        write_records(path, "trajdistill/dataset", [{"i": 0}])
        assert set(os.listdir(tmp_path)) - self_dir == {"clean.jsonl"}

    def test_failed_replace_preserves_original(self, tmp_path, monkeypatch):
        path = tmp_path / "keep.jsonl"
        write_records(path, "trajdistill/dataset", [{"i": 0}])
        original = path.read_text()

        def boom(src, dst):
            raise OSError("simulated failure")

        monkeypatch.setattr(os, "replace", boom)
        with pytest.raises(OSError):
            write_records(path, "trajdistill/dataset", [{"i": 1}])
        monkeypatch.undo()
        assert path.read_text() == original

    def test_non_finite_values_refused(self, tmp_path):
        with pytest.raises(ValueError):
            write_records(tmp_path / "nan.jsonl", "trajdistill/dataset", [{"x": float("nan")}])
