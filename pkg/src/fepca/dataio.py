"""Dataset ingestion and result persistence."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import Dataset
from .simulation import CoverageTable

DELIMITERS = {"comma": ",", "semicolon": ";", "tab": "\t"}


class DataError(ValueError):
    """Malformed input data."""


def _detect_delimiter(header: str) -> str:
    counts = {d: header.count(d) for d in (",", ";", "\t")}
    best = max(counts, key=lambda d: counts[d])
    if counts[best] == 0:
        raise DataError("could not detect a delimiter (comma, semicolon or tab) in the header")
    return best


def read_csv(path, delimiter: str | None = None, decimal: str = ".") -> Dataset:
    """Read a labelled numeric matrix.

    The first row holds column labels, the first column row labels. The
    delimiter is detected from the header among comma, semicolon and tab
    unless given (either the character or its name).
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2:
        raise DataError(f"{path}: need a header row and at least one data row")
    if delimiter is None:
        delim = _detect_delimiter(lines[0])
    else:
        delim = DELIMITERS.get(delimiter, delimiter)
    rows = list(csv.reader(lines, delimiter=delim))
    header = rows[0]
    col_labels = [h.strip() for h in header[1:]]
    width = len(header)
    row_labels, values = [], []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise DataError(f"{path}: row {r} has {len(row)} fields, expected {width}")
        row_labels.append(row[0].strip())
        parsed = []
        for c, cell in enumerate(row[1:], start=2):
            token = cell.strip()
            if decimal != ".":
                token = token.replace(decimal, ".")
            try:
                parsed.append(float(token))
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric value {cell!r} at row {r}, column {c} ({header[c - 1].strip()})"
                ) from None
        values.append(parsed)
    try:
        return Dataset(np.array(values), tuple(row_labels), tuple(col_labels))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


@dataclass
class EllipsoidRecord:
    side: str  # "row" or "column"
    label: str
    dims: list[int]
    center: list[float]
    cov: list[list[float]]
    level: float
    radius2: float


@dataclass
class ResultBundle:
    method: str
    rank: int
    scale: bool
    level: float
    seed: int
    n_replicates: int
    row_labels: list[str]
    col_labels: list[str]
    eigenvalues: list[float]
    explained: list[float]
    total_inertia: float
    sigma2: float
    df: int
    k_int: float
    sigma_k_int: float
    scores: list[list[float]]
    loadings: list[list[float]]
    col_means: list[float]
    col_scales: list[float]
    warnings: list[str] = field(default_factory=list)
    ellipsoids: list[EllipsoidRecord] = field(default_factory=list)
    coverage: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ResultBundle":
        d = dict(d)
        d["ellipsoids"] = [EllipsoidRecord(**e) for e in d.get("ellipsoids", [])]
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @property
    def column_variable_coordinates(self) -> np.ndarray:
        return np.asarray(self.loadings) * np.sqrt(self.eigenvalues)

    def ellipsoids_for(self, dims, side: str = "row") -> list[EllipsoidRecord]:
        dims = list(dims)
        return [e for e in self.ellipsoids if e.side == side and e.dims == dims]


def read_results(path) -> ResultBundle:
    path = Path(path)
    if path.is_dir():
        path = path / "results.json"
    try:
        return ResultBundle.from_dict(json.loads(path.read_text()))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: not a results bundle ({exc})") from exc


def _fmt(v: float) -> str:
    return repr(float(v))


def _write(path: Path, text: str) -> Path:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def _matrix_csv(labels, matrix, prefix: str) -> str:
    lines = [",".join(["label"] + [f"{prefix}{s + 1}" for s in range(len(matrix[0]) if matrix else 0)])]
    for lab, row in zip(labels, matrix):
        lines.append(",".join([_quote(lab)] + [_fmt(v) for v in row]))
    return "\n".join(lines) + "\n"


def _quote(label: str) -> str:
    return f'"{label}"' if any(ch in label for ch in ',"\n') else label


def ellipses_csv(bundle: ResultBundle) -> str:
    lines = ["side,label,dim_x,dim_y,center_x,center_y,cov_xx,cov_xy,cov_yy,level,radius2"]
    for e in bundle.ellipsoids:
        if len(e.dims) != 2:
            continue
        lines.append(",".join([
            e.side, _quote(e.label), str(e.dims[0]), str(e.dims[1]),
            _fmt(e.center[0]), _fmt(e.center[1]),
            _fmt(e.cov[0][0]), _fmt(e.cov[0][1]), _fmt(e.cov[1][1]),
            _fmt(e.level), _fmt(e.radius2),
        ]))
    return "\n".join(lines) + "\n"


def write_results(bundle: ResultBundle, directory) -> list[Path]:
    """Write results.json, scores.csv, loadings.csv, ellipses.csv (and
    coverage.csv when the bundle carries a coverage table).
    """
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror}") from exc
    files = [
        _write(out / "results.json", bundle.to_json()),
        _write(out / "scores.csv", _matrix_csv(bundle.row_labels, bundle.scores, "Dim.")),
        _write(out / "loadings.csv", _matrix_csv(bundle.col_labels, bundle.loadings, "Dim.")),
        _write(out / "ellipses.csv", ellipses_csv(bundle)),
    ]
    if bundle.coverage is not None:
        files.append(_write(out / "coverage.csv", CoverageTable.from_dict(bundle.coverage).to_csv()))
    return files


def write_coverage(table: CoverageTable, directory) -> list[Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    return [_write(out / "coverage.csv", table.to_csv()),
            _write(out / "coverage.json", table.to_json())]


def read_coverage(path) -> CoverageTable:
    return CoverageTable.from_dict(json.loads(Path(path).read_text()))
