"""Tests for score-file reading and writing."""

import tempfile
from pathlib import Path

import pytest

from src.errors import DuplicateId, NonFiniteScore, SchemaViolation
from src.models import ScoreFileRecord, ScoreSplit
from src.score_file import read_score_file, records_by_split, write_score_file


def _write(content: str) -> str:
    with tempfile.NamedTemporaryFile(mode="w", suffix=".jsonl", delete=False) as f:
        f.write(content)
        return f.name


class TestReadScoreFile:
    """Tests for read_score_file."""

    def test_valid_file(self):
        """Test a header with n=5 and two records parses to two records."""
        temp_path = _write(
            '{"format_version": 1, "n": 5}\n'
            '{"id": "a", "split": "cal", "scores": [0.1, 0.2, 0.3, 0.4, 0.5]}\n'
            '{"id": "b", "split": "test_id", "scores": [1, 2, 3, 4, 5]}\n'
        )
        try:
            header, records = read_score_file(temp_path)
            assert header.n == 5
            assert len(records) == 2
            assert records[0].id == "a"
            assert records[1].split is ScoreSplit.TEST_ID
            assert records[1].scores == [1.0, 2.0, 3.0, 4.0, 5.0]
        finally:
            Path(temp_path).unlink()

    def test_missing_file_raises_error(self):
        with pytest.raises(FileNotFoundError):
            read_score_file("nonexistent_scores.jsonl")

    def test_short_record_reports_line(self):
        """Test a 4-score record under n=5 raises SchemaViolation at line 3."""
        temp_path = _write(
            '{"format_version": 1, "n": 5}\n'
            '{"id": "a", "split": "cal", "scores": [0.1, 0.2, 0.3, 0.4, 0.5]}\n'
            '{"id": "b", "split": "cal", "scores": [0.1, 0.2, 0.3, 0.4]}\n'
        )
        try:
            with pytest.raises(SchemaViolation) as exc_info:
                read_score_file(temp_path)
            assert exc_info.value.errors[0][0] == 3
            assert "Line 3" in str(exc_info.value)
        finally:
            Path(temp_path).unlink()

    def test_all_bad_lines_collected(self):
        """Test every malformed line is reported, not just the first."""
        temp_path = _write(
            '{"format_version": 1, "n": 1}\n'
            'not json\n'
            '{"id": "a", "split": "elsewhere", "scores": [0.1]}\n'
            '{"id": "b", "split": "cal", "scores": [0.1]}\n'
        )
        try:
            with pytest.raises(SchemaViolation) as exc_info:
                read_score_file(temp_path)
            assert [line for line, _ in exc_info.value.errors] == [2, 3]
        finally:
            Path(temp_path).unlink()

    def test_duplicate_id(self):
        temp_path = _write(
            '{"format_version": 1, "n": 1}\n'
            '{"id": "dup", "split": "cal", "scores": [0.1]}\n'
            '{"id": "dup", "split": "cal", "scores": [0.2]}\n'
        )
        try:
            with pytest.raises(DuplicateId) as exc_info:
                read_score_file(temp_path)
            assert exc_info.value.record_id == "dup"
            assert exc_info.value.line_number == 3
        finally:
            Path(temp_path).unlink()

    def test_non_finite_score(self):
        temp_path = _write(
            '{"format_version": 1, "n": 2}\n'
            '{"id": "a", "split": "cal", "scores": [0.1, NaN]}\n'
        )
        try:
            with pytest.raises(NonFiniteScore):
                read_score_file(temp_path)
        finally:
            Path(temp_path).unlink()

    @pytest.mark.parametrize("quoted", ['"nan"', '"inf"'])
    def test_quoted_non_finite_score(self, quoted):
        """Test a quoted NaN or infinity is rejected after float coercion."""
        temp_path = _write(
            '{"format_version": 1, "n": 2}\n'
            f'{{"id": "a", "split": "cal", "scores": [{quoted}, 1.0]}}\n'
        )
        try:
            with pytest.raises(NonFiniteScore):
                read_score_file(temp_path)
        finally:
            Path(temp_path).unlink()

    def test_missing_header(self):
        temp_path = _write("")
        try:
            with pytest.raises(SchemaViolation):
                read_score_file(temp_path)
        finally:
            Path(temp_path).unlink()

    def test_bad_header(self):
        temp_path = _write('{"format_version": 1}\n')
        try:
            with pytest.raises(SchemaViolation) as exc_info:
                read_score_file(temp_path)
            assert exc_info.value.errors[0][0] == 1
        finally:
            Path(temp_path).unlink()

    def test_blank_lines_skipped(self):
        temp_path = _write(
            '{"format_version": 1, "n": 1}\n'
            '\n'
            '{"id": "a", "split": "cal", "scores": [0.1]}\n'
        )
        try:
            _, records = read_score_file(temp_path)
            assert len(records) == 1
        finally:
            Path(temp_path).unlink()


class TestWriteScoreFile:
    """Tests for write_score_file and records_by_split."""

    def test_written_file_reads_back(self, tmp_path):
        records = [
            ScoreFileRecord(id="a", split="cal", scores=[0.1, 1 / 3]),
            ScoreFileRecord(id="b", split="test_ood", scores=[2.5, 1e-17]),
        ]
        path = tmp_path / "scores.jsonl"
        write_score_file(path, 2, records)
        header, read_back = read_score_file(path)
        assert header.n == 2
        assert read_back == records

    def test_length_mismatch_rejected(self, tmp_path):
        records = [ScoreFileRecord(id="a", split="cal", scores=[0.1])]
        with pytest.raises(SchemaViolation):
            write_score_file(tmp_path / "scores.jsonl", 2, records)
        assert not (tmp_path / "scores.jsonl").exists()

    def test_records_by_split(self):
        records = [
            ScoreFileRecord(id="a", split="cal", scores=[0.1]),
            ScoreFileRecord(id="b", split="test_id", scores=[0.2]),
            ScoreFileRecord(id="c", split="cal", scores=[0.3]),
        ]
        assert [r.id for r in records_by_split(records, ScoreSplit.CAL)] == ["a", "c"]
