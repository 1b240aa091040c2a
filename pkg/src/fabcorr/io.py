"""CSV ingestion, TSV result files and JSON run metadata."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corr_stats import MIN_SAMPLES, DataMatrix, constant_columns
from .exceptions import DegenerateInputError
from .fab_engine import TestResult
from .multiple_testing import DecisionSet

MISSING_TOKENS = frozenset({"", "na", "n/a", "nan", "null", "none", "."})
RESULT_COLUMNS = ("pair_w", "pair_v", "z_hat", "p_umpu", "p_fab", "offset_b",
                  "m_j", "v_j", "group_id", "rejected")


@dataclass
class IngestReport:
    path: str
    rows_read: int = 0
    rows_dropped: int = 0
    dropped_columns: list[str] = field(default_factory=list)
    n: int = 0
    q: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def fmt(x: float) -> str:
    """Lossless text form of a double."""
    return format(float(x), ".17g")


def _parse_cell(text: str) -> float:
    token = text.strip()
    if token.lower() in MISSING_TOKENS:
        return math.nan
    try:
        value = float(token)
    except ValueError:
        return math.nan
    return value if math.isfinite(value) else math.nan


def ingest_csv(path) -> tuple[DataMatrix, IngestReport]:
    """Read a numeric CSV with a header row of column labels.

    Rows with any missing, non-numeric or non-finite cell (or the wrong number
    of fields) are dropped; constant columns are then dropped. Both are
    counted in the returned report.
    """
    path = Path(path)
    report = IngestReport(str(path))
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DegenerateInputError(f"{path}: empty file") from None
        if not header or any(not h for h in header):
            raise DegenerateInputError(f"{path}: malformed header (empty column label)")
        if len(set(header)) != len(header):
            raise DegenerateInputError(f"{path}: malformed header (duplicate column labels)")
        rows = []
        for record in reader:
            if not record or all(not c.strip() for c in record):
                continue
            report.rows_read += 1
            if len(record) != len(header):
                report.rows_dropped += 1
                continue
            values = [_parse_cell(c) for c in record]
            if any(math.isnan(v) for v in values):
                report.rows_dropped += 1
                continue
            rows.append(values)

    if len(rows) < MIN_SAMPLES:
        raise DegenerateInputError(
            f"{path}: only {len(rows)} complete rows, need at least {MIN_SAMPLES}"
        )
    x = np.array(rows, dtype=float)
    keep = ~constant_columns(x)
    report.dropped_columns = [h for h, k in zip(header, keep) if not k]
    if keep.sum() < 2:
        raise DegenerateInputError(f"{path}: fewer than 2 columns with nonzero variance")
    labels = tuple(h for h, k in zip(header, keep) if k)
    data = DataMatrix(x[:, keep], labels)
    report.n, report.q = data.n, data.q
    return data, report


def write_csv(data: DataMatrix, path) -> None:
    """Canonical CSV form of a data matrix (re-ingesting it is an identity)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(data.column_labels)
        for row in data.values:
            writer.writerow([fmt(v) for v in row])


def write_results(results: Sequence[TestResult], decisions: DecisionSet, path) -> None:
    """Tab-separated results, one row per test in ascending pair index."""
    if not results:
        raise ValueError("no results to write")
    rejected = np.asarray(decisions.rejected, dtype=bool)
    if rejected.size != len(results):
        raise ValueError("decision vector and results differ in length")
    order = sorted(range(len(results)), key=lambda i: results[i].pair.j)
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("\t".join(RESULT_COLUMNS) + "\n")
        for i in order:
            r = results[i]
            fields = [str(r.pair.w), str(r.pair.v), fmt(r.z_hat), fmt(r.p_umpu), fmt(r.p_fab),
                      fmt(r.offset_b), fmt(r.m_j), fmt(r.v_j), str(r.group_id),
                      "1" if rejected[i] else "0"]
            fh.write("\t".join(fields) + "\n")


def read_results(path) -> dict[str, np.ndarray]:
    """Parse a file written by :func:`write_results` into column arrays."""
    with Path(path).open(encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if tuple(header) != RESULT_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = [line.rstrip("\n").split("\t") for line in fh if line.strip()]
    cols = list(zip(*rows)) if rows else [()] * len(header)
    out = {}
    for name, values in zip(header, cols):
        if name in ("pair_w", "pair_v", "group_id"):
            out[name] = np.array([int(v) for v in values], dtype=int)
        elif name == "rejected":
            out[name] = np.array([v == "1" for v in values], dtype=bool)
        else:
            out[name] = np.array([float(v) for v in values], dtype=float)
    return out


def write_table(rows: Sequence[dict], path) -> None:
    """Generic TSV writer for summary rows sharing the same keys."""
    if not rows:
        raise ValueError("no rows to write")
    keys = list(rows[0])
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("\t".join(keys) + "\n")
        for row in rows:
            fh.write("\t".join(_cell(row[k]) for k in keys) + "\n")


def _cell(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return fmt(value)
    return str(value)


def metadata_path(output) -> Path:
    output = Path(output)
    return output.with_name(output.name + ".meta.json")


def write_metadata(meta: dict, output) -> Path:
    path = metadata_path(output)
    path.write_text(json.dumps(meta, indent=2, default=_json_default) + "\n", encoding="utf-8")
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")
