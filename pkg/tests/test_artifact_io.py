"""Tests for artifact files, report tables and feature files."""

import json

import numpy as np
import pytest

from src.artifact_io import (
    atomic_write_text,
    format_table,
    read_artifact,
    read_feature_file,
    read_table,
    write_artifact,
    write_feature_file,
    write_table,
)
from src.conformal import FORMAT_VERSION, AggregationKind, build_artifact
from src.core_types import as_tensor
from src.errors import DuplicateId, SchemaViolation


class TestArtifactFile:
    """Tests for write_artifact and read_artifact."""

    def test_lossless(self, tmp_path):
        """Test full-precision scores survive a write and read."""
        art = build_artifact([0.1, 1 / 3, 2.0 ** -40, 12345.678901234567], 5, 99, "abc", AggregationKind.MEAN)
        path = tmp_path / "calibration.json"
        write_artifact(path, art)
        assert read_artifact(path) == art

    def test_file_is_versioned_json(self, tmp_path):
        path = tmp_path / "calibration.json"
        write_artifact(path, build_artifact([1.0], 1, 0, "abc"))
        raw = json.loads(path.read_text())
        assert raw["format_version"] == FORMAT_VERSION
        assert raw["sorted_scores"] == [1.0]

    def test_stable_bytes(self, tmp_path):
        art = build_artifact([3.0, 1.0], 2, 7, "abc")
        write_artifact(tmp_path / "a.json", art)
        write_artifact(tmp_path / "b.json", art)
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_artifact(tmp_path / "missing.json")

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "calibration.json"
        path.write_text(json.dumps({"format_version": 42}))
        with pytest.raises(ValueError) as exc_info:
            read_artifact(path)
        assert "format_version" in str(exc_info.value)

    def test_not_json(self, tmp_path):
        path = tmp_path / "calibration.json"
        path.write_text("sorted_scores: [1, 2]")
        with pytest.raises(ValueError):
            read_artifact(path)

    def test_unsorted_scores_rejected(self, tmp_path):
        path = tmp_path / "calibration.json"
        path.write_text(json.dumps({
            "format_version": FORMAT_VERSION, "n": 1, "seed": 0, "aggregation": "sum",
            "config_fingerprint": "x", "sorted_scores": [2.0, 1.0],
        }))
        with pytest.raises(ValueError):
            read_artifact(path)


class TestTables:
    """Tests for CSV report tables."""

    def test_format(self):
        text = format_table(["epsilon", "fdr", "flag"], [[0.05, 1 / 3, True], [np.float64(0.1), np.int64(2), np.bool_(False)]])
        assert text.splitlines() == [
            "epsilon,fdr,flag",
            "0.05,0.3333333333333333,true",
            "0.1,2,false",
        ]

    def test_round_trip(self, tmp_path):
        path = tmp_path / "table.csv"
        write_table(path, ["a", "b"], [[1, 0.1 + 0.2], ["x,y", 2.5]])
        rows = read_table(path)
        assert rows[0] == {"a": "1", "b": "0.30000000000000004"}
        assert rows[1]["a"] == "x,y"
        assert float(rows[0]["b"]) == 0.1 + 0.2

    def test_atomic_write_creates_directories(self, tmp_path):
        path = tmp_path / "nested" / "dir" / "out.txt"
        atomic_write_text(path, "hello")
        assert path.read_text() == "hello"
        assert [p.name for p in path.parent.iterdir()] == ["out.txt"]


class TestFeatureFile:
    """Tests for write_feature_file and read_feature_file."""

    def test_round_trip(self, tmp_path):
        path = tmp_path / "points.csv"
        items = [("p0", "test_id", as_tensor([0.1, -1 / 3])), ("p1", "test_ood", as_tensor([3.0, 0.0]))]
        write_feature_file(path, items)
        read_back = read_feature_file(path)
        assert [(pid, split) for pid, split, _ in read_back] == [("p0", "test_id"), ("p1", "test_ood")]
        assert read_back[0][2].tolist() == [0.1, -1 / 3]

    def test_header(self, tmp_path):
        path = tmp_path / "points.csv"
        write_feature_file(path, [("p0", "cal", as_tensor([1.0, 2.0]))])
        assert path.read_text().splitlines()[0] == "id,split,x0,x1"

    def test_bad_rows_collected(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("id,split,x0,x1\np0,cal,1.0\np1,cal,abc,2.0\np2,cal,nan,1.0\np3,cal,1.0,2.0\n")
        with pytest.raises(SchemaViolation) as exc_info:
            read_feature_file(path)
        assert [line for line, _ in exc_info.value.errors] == [2, 3, 4]

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("id,split,x0\np0,cal,1.0\np0,cal,2.0\n")
        with pytest.raises(DuplicateId):
            read_feature_file(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("name,x0\np0,1.0\n")
        with pytest.raises(SchemaViolation):
            read_feature_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_feature_file(tmp_path / "missing.csv")
