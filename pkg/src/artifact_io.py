"""Calibration artifact files, CSV report tables and atomic file writes."""

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from .conformal import FORMAT_VERSION, CalibrationArtifact
from .core_types import validate_tensor
from .errors import DetectorError, DuplicateId, SchemaViolation

PathLike = Union[str, Path]


def atomic_write_text(output_path: PathLike, content: str) -> None:
    """
    Write text by writing a temp file next to the target and renaming it.

    Raises:
        PermissionError: If the target directory is not writable
    """
    path = Path(output_path)
    path.parent.mkdir(parents=True, exist_ok=True)

    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(content)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def write_artifact(output_path: PathLike, art: CalibrationArtifact) -> None:
    """Write an artifact as sorted-key JSON; floats keep their shortest round-trip form."""
    payload = art.model_dump(mode="json")
    payload["k"] = art.k
    atomic_write_text(output_path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_artifact(file_path: PathLike) -> CalibrationArtifact:
    """
    Load a calibration artifact.

    Raises:
        FileNotFoundError: If the artifact file doesn't exist
        ValueError: If the file is not a valid artifact of a supported version
    """
    path = Path(file_path)
    if not path.exists():
        raise FileNotFoundError(f"Artifact file not found: {file_path}")

    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"Artifact {file_path} is not valid JSON: {e.msg}") from e

    version = raw.get("format_version") if isinstance(raw, dict) else None
    if version != FORMAT_VERSION:
        raise ValueError(f"Unsupported artifact format_version: {version}")

    try:
        art = CalibrationArtifact.model_validate(raw)
    except ValidationError as e:
        raise ValueError(f"Invalid artifact {file_path}: {e}") from e

    if raw.get("k", art.k) != art.k:
        raise ValueError(f"Artifact {file_path} declares k = {raw['k']} but holds {art.k} scores")
    return art


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def format_table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_table(output_path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a comma-separated table with a header row."""
    atomic_write_text(output_path, format_table(header, rows))


def read_table(file_path: PathLike) -> List[dict]:
    """Read a report table back as a list of row dicts (string values)."""
    with open(file_path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def write_feature_file(output_path: PathLike, items: Iterable[Tuple[str, str, np.ndarray]]) -> None:
    """Write (id, split, vector) items as a table with columns id, split, x0, x1, ..."""
    items = list(items)
    width = items[0][2].size if items else 0
    header = ["id", "split"] + [f"x{i}" for i in range(width)]
    rows = [[pid, split, *(float(v) for v in np.ravel(vec))] for pid, split, vec in items]
    write_table(output_path, header, rows)


def read_feature_file(file_path: PathLike) -> List[Tuple[str, str, np.ndarray]]:
    """
    Read a feature file written by write_feature_file.

    Raises:
        FileNotFoundError: If the feature file doesn't exist
        SchemaViolation: If any row is malformed or non-finite
        DuplicateId: If a row id repeats
    """
    path = Path(file_path)
    if not path.exists():
        raise FileNotFoundError(f"Feature file not found: {file_path}")

    errors: List[Tuple[int, str]] = []
    items: List[Tuple[str, str, np.ndarray]] = []
    seen = set()
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or header[:2] != ["id", "split"] or len(header) < 3:
            raise SchemaViolation([(1, "header must be id, split, x0, ...")])
        width = len(header) - 2
        for line_num, row in enumerate(reader, start=2):
            if len(row) != width + 2:
                errors.append((line_num, f"expected {width + 2} columns, got {len(row)}"))
                continue
            pid, split, *values = row
            if pid in seen:
                raise DuplicateId(pid, line_num)
            seen.add(pid)
            try:
                vec = validate_tensor([width], [float(v) for v in values])
            except (ValueError, DetectorError) as e:
                errors.append((line_num, str(e)))
                continue
            items.append((pid, split, vec))

    if errors:
        raise SchemaViolation(errors)
    return items
