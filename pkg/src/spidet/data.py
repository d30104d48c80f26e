"""Dataset manifests and CSV ingestion.

A manifest is a small JSON document pointing at a CSV (path relative to
the manifest file), naming the primary and privileged columns and an
optional 0/1 label column. The CSV must be UTF-8 with a header row and
numeric feature cells.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError


@dataclass
class DatasetManifest:
    csv_path: str
    primary_columns: list[str]
    privileged_columns: list[str] = field(default_factory=list)
    label_column: str | None = None
    base_dir: Path | None = None

    def __post_init__(self):
        overlap = set(self.primary_columns) & set(self.privileged_columns)
        if overlap:
            raise DataError(f"columns listed as both primary and privileged: {sorted(overlap)}")
        if len(set(self.primary_columns)) != len(self.primary_columns):
            raise DataError("duplicate names in primary_columns")
        if len(set(self.privileged_columns)) != len(self.privileged_columns):
            raise DataError("duplicate names in privileged_columns")

    def resolved_csv_path(self) -> Path:
        p = Path(self.csv_path)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p

    def to_json_dict(self) -> dict:
        return {
            "csv_path": self.csv_path,
            "label_column": self.label_column,
            "privileged_columns": list(self.privileged_columns),
            "primary_columns": list(self.primary_columns),
        }


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed manifest {path}: {exc}") from None
    for key in ("csv_path", "primary_columns"):
        if key not in raw:
            raise DataError(f"manifest {path} missing key '{key}'")
    return DatasetManifest(
        csv_path=raw["csv_path"],
        primary_columns=list(raw["primary_columns"]),
        privileged_columns=list(raw.get("privileged_columns") or []),
        label_column=raw.get("label_column"),
        base_dir=path.parent,
    )


def save_manifest(manifest: DatasetManifest, path: str | Path):
    Path(path).write_text(json.dumps(manifest.to_json_dict(), indent=2) + "\n", encoding="utf-8")


def read_csv_table(path: str | Path) -> tuple[list[str], list[list[str]]]:
    """Read a headered CSV into (header, rows of raw strings)."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"empty file: {path}") from None
            rows = [r for r in reader if r]
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    if not header or all(not h.strip() for h in header):
        raise DataError(f"empty file: {path}")
    if not rows:
        raise DataError(f"no data rows in {path}")
    for r, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: line {r} has {len(row)} cells, expected {len(header)}")
    return header, rows


def _parse_numeric(rows: list[list[str]], col: int, name: str, path) -> np.ndarray:
    out = np.empty(len(rows), dtype=np.float64)
    for r, row in enumerate(rows):
        try:
            out[r] = float(row[col])
        except ValueError:
            raise DataError(
                f"{path}: non-numeric value at row {r + 1}, column '{name}': {row[col]!r}"
            ) from None
    return out


def load_csv(manifest: DatasetManifest) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    """Load (x, x_star, labels) in manifest column order."""
    path = manifest.resolved_csv_path()
    header, rows = read_csv_table(path)
    index = {name: i for i, name in enumerate(header)}

    def columns(names):
        cols = []
        for name in names:
            if name not in index:
                raise DataError(f"column not found: {name}")
            cols.append(_parse_numeric(rows, index[name], name, path))
        return np.column_stack(cols) if cols else None

    x = columns(manifest.primary_columns)
    if x is None:
        raise DataError("manifest lists no primary columns")
    x_star = columns(manifest.privileged_columns)

    labels = None
    if manifest.label_column is not None:
        if manifest.label_column not in index:
            raise DataError(f"column not found: {manifest.label_column}")
        raw = _parse_numeric(rows, index[manifest.label_column], manifest.label_column, path)
        as_int = raw.astype(np.int64)
        if not np.array_equal(raw, as_int) or not np.isin(as_int, (0, 1)).all():
            raise DataError(f"label column '{manifest.label_column}' must contain only 0 and 1")
        labels = as_int
    return x, x_star, labels


def load_numeric_csv(path: str | Path, exclude: list[str] | None = None) -> tuple[list[str], np.ndarray]:
    """Load every column of a CSV as numeric, minus excluded names."""
    header, rows = read_csv_table(path)
    skip = set(exclude or [])
    names = [h for h in header if h not in skip]
    if not names:
        raise DataError(f"no feature columns in {path}")
    cols = [_parse_numeric(rows, header.index(n), n, path) for n in names]
    return names, np.column_stack(cols)
