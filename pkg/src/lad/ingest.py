"""Loaders for observation matrices and long-format time-series panels.

Matrices are delimiter-separated numeric tables, optionally with a header
row.  Panels are long tables with one row per (series, time) pair which are
pivoted into an ``(N, T, d)`` array; missing cells become zeros.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from lad.detector import DataMatrix
from lad.errors import DomainError, FormatError
from lad.temporal import TimeSeriesPanel

logger = logging.getLogger(__name__)

DELIMITERS = ",\t;"


def sniff_delimiter(text: str) -> str:
    """Pick comma, tab or semicolon from a sample of the file."""
    sample = "\n".join(text.splitlines()[:50])
    try:
        return csv.Sniffer().sniff(sample, delimiters=DELIMITERS).delimiter
    except csv.Error:
        counts = {d: sample.count(d) for d in DELIMITERS}
        best = max(counts, key=counts.get)
        return best if counts[best] else ","


def _read_text(path) -> str:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"no such file: {path}")
    return path.read_text(encoding="utf-8")


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_matrix(
    path,
    label_column: str | int | None = None,
    *,
    id_column: str | int | None = None,
    delimiter: str | None = None,
) -> DataMatrix:
    """Read a numeric table into a DataMatrix.

    A first row containing any non-numeric cell is taken as the header.
    Columns may be named by header text or by zero-based position.

    Raises:
        FormatError: Missing file, ragged rows, non-numeric or non-finite
            cells (offending line numbers are listed), unknown columns.
    """
    text = _read_text(path)
    delimiter = delimiter or sniff_delimiter(text)
    rows = [r for r in csv.reader(io.StringIO(text), delimiter=delimiter) if r and any(c.strip() for c in r)]
    if not rows:
        raise FormatError(f"{path}: file is empty")
    rows = [[c.strip() for c in r] for r in rows]
    header = None
    first_line = 1
    if not all(_is_number(c) for c in rows[0]):
        header, rows = rows[0], rows[1:]
        first_line = 2
    if not rows:
        raise FormatError(f"{path}: no data rows")
    width = len(header) if header else len(rows[0])
    ragged = [first_line + i for i, r in enumerate(rows) if len(r) != width]
    if ragged:
        raise FormatError(f"{path}: expected {width} fields, ragged lines {ragged[:10]}")

    def resolve(col) -> int:
        if isinstance(col, int) or (isinstance(col, str) and col.isdigit() and (header is None or col not in header)):
            idx = int(col)
            if not 0 <= idx < width:
                raise FormatError(f"{path}: column index {idx} out of range for {width} columns")
            return idx
        if header is None or col not in header:
            raise FormatError(f"{path}: unknown column {col!r}")
        return header.index(col)

    label_idx = None if label_column is None else resolve(label_column)
    id_idx = None if id_column is None else resolve(id_column)
    feature_idx = [j for j in range(width) if j not in (label_idx, id_idx)]
    if not feature_idx:
        raise FormatError(f"{path}: no feature columns")

    values = np.empty((len(rows), len(feature_idx)))
    labels = np.empty(len(rows)) if label_idx is not None else None
    bad = []
    for i, r in enumerate(rows):
        try:
            values[i] = [float(r[j]) for j in feature_idx]
            if labels is not None:
                labels[i] = float(r[label_idx])
        except ValueError:
            bad.append(first_line + i)
            continue
        if not np.all(np.isfinite(values[i])):
            bad.append(first_line + i)
    if bad:
        raise FormatError(f"{path}: non-numeric or non-finite cells on lines {bad[:10]}")
    if labels is not None and not np.isin(labels, (0.0, 1.0)).all():
        lines = [first_line + i for i in np.flatnonzero(~np.isin(labels, (0.0, 1.0)))[:10]]
        raise FormatError(f"{path}: labels must be 0 or 1, see lines {lines}")

    names = tuple(header[j] for j in feature_idx) if header else None
    ids = tuple(r[id_idx] for r in rows) if id_idx is not None else None
    return DataMatrix(values, None if labels is None else labels.astype(np.int8), names, ids)


def save_matrix(matrix: DataMatrix, path, *, delimiter: str = ",") -> None:
    """Write ``matrix`` with a header row; floats use shortest round-trip form."""
    _, d = matrix.shape
    names = list(matrix.feature_names or (f"x{j}" for j in range(d)))
    header = (["id"] if matrix.row_ids else []) + names + (["label"] if matrix.labels is not None else [])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(header)
        for i, row in enumerate(matrix.values):
            cells = [repr(float(v)) for v in row]
            if matrix.row_ids:
                cells.insert(0, matrix.row_ids[i])
            if matrix.labels is not None:
                cells.append(str(int(matrix.labels[i])))
            writer.writerow(cells)


def load_odds(path) -> DataMatrix:
    """Load an ODDS benchmark ``.mat`` file holding ``X`` and ``y``.

    MATLAB v7.3 files (e.g. http, smtp) are HDF5 and need ``h5py``.
    """
    from scipy.io import loadmat

    try:
        mat = loadmat(path)
        x, y = mat["X"], mat["y"]
    except NotImplementedError:
        import h5py

        with h5py.File(path, "r") as fh:
            x, y = np.asarray(fh["X"]).T, np.asarray(fh["y"]).T
    except (KeyError, ValueError, OSError) as exc:
        raise FormatError(f"{path}: not an ODDS matrix file ({exc})") from exc
    return DataMatrix(np.asarray(x, dtype=np.float64), np.asarray(y).reshape(-1).astype(np.int8))


@dataclass(frozen=True)
class PanelSpec:
    """Column layout of a long-format panel file and its filters.

    Attributes:
        value_columns: Feature columns, in output order.
        id_column: Series identifier column.
        time_column: Time column; numeric or date-like values sort
            chronologically, anything else lexically.
        population_column: Optional per-series population column.
        min_population: Series with a smaller or missing population are
            dropped when ``population_column`` is set.
        trim_leading: Start each series at its first step with any nonzero
            value (varying-length mode).
    """

    value_columns: Sequence[str]
    id_column: str = "id"
    time_column: str = "time"
    population_column: str | None = None
    min_population: int = 50_000
    trim_leading: bool = False

    def __post_init__(self) -> None:
        cols = tuple(self.value_columns)
        object.__setattr__(self, "value_columns", cols)
        if not cols:
            raise DomainError("value_columns must not be empty")
        clash = {self.id_column, self.time_column} & set(cols)
        if clash:
            raise DomainError(f"value columns overlap id/time columns: {sorted(clash)}")
        if self.min_population < 0:
            raise DomainError(f"min_population must be non-negative, got {self.min_population}")


def _time_order(labels: pd.Series) -> np.ndarray:
    numeric = pd.to_numeric(labels, errors="coerce")
    if numeric.notna().all():
        return np.argsort(numeric.to_numpy(), kind="stable")
    dates = pd.to_datetime(labels, errors="coerce", format="mixed")
    if dates.notna().all():
        return np.argsort(dates.to_numpy(), kind="stable")
    return np.argsort(labels.to_numpy(dtype=str), kind="stable")


def load_panel(path, spec: PanelSpec, *, delimiter: str | None = None) -> TimeSeriesPanel:
    """Pivot a long-format file into a TimeSeriesPanel.

    Missing (series, time) cells and NaN tokens become zeros.  Series are
    ordered by identifier.

    Raises:
        FormatError: Missing file or column, duplicate (id, time) pairs,
            non-numeric values.
    """
    text = _read_text(path)
    delimiter = delimiter or sniff_delimiter(text)
    frame = pd.read_csv(
        io.StringIO(text),
        sep=delimiter,
        dtype={spec.id_column: str, spec.time_column: str},
        float_precision="round_trip",
    )
    needed = [spec.id_column, spec.time_column, *spec.value_columns]
    if spec.population_column:
        needed.append(spec.population_column)
    missing = [c for c in needed if c not in frame.columns]
    if missing:
        raise FormatError(f"{path}: missing columns {missing}")
    dup = frame.duplicated([spec.id_column, spec.time_column], keep=False)
    if dup.any():
        lines = (np.flatnonzero(dup.to_numpy()) + 2)[:10].tolist()
        raise FormatError(f"{path}: duplicate ({spec.id_column}, {spec.time_column}) pairs on lines {lines}")
    numeric_cols = list(spec.value_columns) + ([spec.population_column] if spec.population_column else [])
    for col in numeric_cols:
        converted = pd.to_numeric(frame[col], errors="coerce")
        bad = converted.isna() & frame[col].notna()
        if bad.any():
            lines = (np.flatnonzero(bad.to_numpy()) + 2)[:10].tolist()
            raise FormatError(f"{path}: non-numeric {col!r} values on lines {lines}")
        frame[col] = converted

    times = frame[spec.time_column].drop_duplicates().reset_index(drop=True)
    times = times.iloc[_time_order(times)].tolist()
    ids = sorted(frame[spec.id_column].unique())

    populations = None
    if spec.population_column:
        pop = frame.groupby(spec.id_column)[spec.population_column].first().reindex(ids)
        keep = pop.notna() & (pop >= spec.min_population)
        dropped = int((~keep).sum())
        if dropped:
            logger.info("dropped %d series below population %d", dropped, spec.min_population)
        ids = [i for i, k in zip(ids, keep) if k]
        populations = pop[keep].to_numpy(dtype=np.float64)
        if not ids:
            raise FormatError(f"{path}: no series left after population filtering")

    cube = np.zeros((len(ids), len(times), len(spec.value_columns)))
    indexed = frame.set_index([spec.id_column, spec.time_column])
    for f, col in enumerate(spec.value_columns):
        wide = indexed[col].unstack(spec.time_column).reindex(index=ids, columns=times)
        cube[:, :, f] = wide.to_numpy(dtype=np.float64)
    cube = np.nan_to_num(cube, nan=0.0)

    offsets = None
    if spec.trim_leading:
        nonzero = (cube != 0).any(axis=2)
        offsets = np.where(nonzero.any(axis=1), nonzero.argmax(axis=1), 0)
    return TimeSeriesPanel(cube, tuple(ids), offsets, tuple(times), spec.value_columns, populations)


def per_capita(panel: TimeSeriesPanel, populations=None) -> TimeSeriesPanel:
    """Divide every series by its population (``panel.populations`` by default)."""
    pops = panel.populations if populations is None else np.asarray(populations, dtype=np.float64)
    if pops is None:
        raise DomainError("no populations given and the panel carries none")
    pops = np.asarray(pops, dtype=np.float64).reshape(-1)
    if pops.shape != (panel.series_count,):
        raise DomainError(f"expected {panel.series_count} populations, got {pops.shape[0]}")
    if not np.all(np.isfinite(pops) & (pops > 0)):
        raise DomainError("populations must be positive and finite")
    return panel.replace_values(panel.values / pops[:, None, None])


def diff_to_new_counts(panel: TimeSeriesPanel) -> tuple[TimeSeriesPanel, int]:
    """Turn cumulative counts into per-step new counts.

    Negative differences (downward corrections) are clamped to zero.

    Returns:
        The differenced panel and the number of clamped cells.
    """
    diff = np.diff(panel.values, axis=1, prepend=0.0)
    negative = diff < 0
    clamped = int(negative.sum())
    if clamped:
        logger.info("clamped %d negative daily differences to zero", clamped)
    diff[negative] = 0.0
    return panel.replace_values(diff), clamped

