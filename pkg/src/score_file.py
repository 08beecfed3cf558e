"""Score-file parsing and validation (one JSON header line, one JSON record per line)."""

import json
import math
from pathlib import Path
from typing import Dict, Iterable, List, Tuple, Union

from pydantic import ValidationError

from .artifact_io import atomic_write_text
from .errors import DuplicateId, NonFiniteScore, SchemaViolation
from .models import SCORE_FILE_VERSION, ScoreFileHeader, ScoreFileRecord, ScoreSplit


def _describe(e: ValidationError) -> str:
    return ", ".join(
        f"'{'.'.join(str(loc) for loc in err['loc'])}': {err['msg']}" for err in e.errors()
    )


def read_score_file(file_path: Union[str, Path]) -> Tuple[ScoreFileHeader, List[ScoreFileRecord]]:
    """
    Parse a score file and validate every record against the header.

    Args:
        file_path: Path to the score file

    Returns:
        The header and the list of validated records

    Raises:
        FileNotFoundError: If the score file doesn't exist
        SchemaViolation: If the header or any record is malformed
        DuplicateId: If a record id repeats
        NonFiniteScore: If a score is NaN or infinite
    """
    path = Path(file_path)

    if not path.exists():
        raise FileNotFoundError(f"Score file not found: {file_path}")

    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()

    if not lines or not lines[0].strip():
        raise SchemaViolation([(1, "missing header line")])

    try:
        header = ScoreFileHeader.model_validate(json.loads(lines[0]))
    except json.JSONDecodeError as e:
        raise SchemaViolation([(1, f"header is not valid JSON: {e.msg}")]) from e
    except ValidationError as e:
        raise SchemaViolation([(1, _describe(e))]) from e

    errors: List[Tuple[int, str]] = []
    records: List[ScoreFileRecord] = []
    seen: Dict[str, int] = {}

    for line_num, line in enumerate(lines[1:], start=2):  # line 1 is the header
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as e:
            errors.append((line_num, f"not valid JSON: {e.msg}"))
            continue

        try:
            record = ScoreFileRecord.model_validate(raw)
        except ValidationError as e:
            errors.append((line_num, _describe(e)))
            continue

        # checked after coercion: quoted "nan" or "inf" also parse to floats
        if not all(math.isfinite(s) for s in record.scores):
            raise NonFiniteScore(f"Line {line_num}: scores must be finite")

        if len(record.scores) != header.n:
            errors.append(
                (line_num, f"expected {header.n} scores, got {len(record.scores)}")
            )
            continue
        if record.id in seen:
            raise DuplicateId(record.id, line_num)
        seen[record.id] = line_num
        records.append(record)

    if errors:
        raise SchemaViolation(errors)

    return header, records


def write_score_file(
    file_path: Union[str, Path],
    n: int,
    records: Iterable[ScoreFileRecord],
) -> None:
    """Write records under a header declaring n scores each."""
    header = ScoreFileHeader(format_version=SCORE_FILE_VERSION, n=n)
    lines = [json.dumps(header.model_dump(), sort_keys=True)]
    for record in records:
        if len(record.scores) != n:
            raise SchemaViolation([(len(lines) + 1, f"expected {n} scores, got {len(record.scores)}")])
        lines.append(json.dumps(record.model_dump(mode="json"), sort_keys=True))
    atomic_write_text(file_path, "\n".join(lines) + "\n")


def records_by_split(
    records: Iterable[ScoreFileRecord], split: ScoreSplit
) -> List[ScoreFileRecord]:
    return [r for r in records if r.split is split]
