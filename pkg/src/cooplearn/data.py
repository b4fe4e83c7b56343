"""View matrices, response handling, standardization and CSV ingestion.

Standardization uses the population (denominator ``n``) standard deviation.
Constant columns are mapped to all-zeros with a recorded scale of 1 so the
solver sees an inert feature and column indices stay stable.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

GAUSSIAN = "gaussian"
BINOMIAL = "binomial"
FAMILIES = (GAUSSIAN, BINOMIAL)

# relative threshold below which a column counts as constant
_CONST_TOL = 1e-12


class DataError(ValueError):
    """Raised for malformed or invalid input data."""


@dataclass(frozen=True)
class DataView:
    name: str
    matrix: np.ndarray
    column_names: tuple[str, ...] = ()

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim == 1:
            m = m[:, None]
        if m.ndim != 2 or m.shape[0] < 1:
            raise DataError(f"view {self.name!r}: expected a 2-d matrix with at least one row")
        if not np.all(np.isfinite(m)):
            raise DataError(f"view {self.name!r}: NaN or Inf entries")
        names = tuple(self.column_names) or tuple(f"V{j + 1}" for j in range(m.shape[1]))
        if len(names) != m.shape[1]:
            raise DataError(f"view {self.name!r}: {len(names)} column names for {m.shape[1]} columns")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def p(self) -> int:
        return self.matrix.shape[1]

    def take(self, rows) -> "DataView":
        return DataView(self.name, self.matrix[rows], self.column_names)


@dataclass(frozen=True)
class StandardizedView:
    matrix: np.ndarray
    column_means: np.ndarray
    column_sds: np.ndarray
    source_name: str
    column_names: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def p(self) -> int:
        return self.matrix.shape[1]

    def transform(self, raw: np.ndarray) -> np.ndarray:
        """Standardize new rows with the stored (training) statistics."""
        raw = np.asarray(raw, dtype=float)
        if raw.ndim == 1:
            raw = raw[None, :]
        if raw.shape[1] != self.p:
            raise DataError(
                f"view {self.source_name!r}: expected {self.p} columns, got {raw.shape[1]}"
            )
        return (raw - self.column_means) / self.column_sds

    def destandardize(self) -> np.ndarray:
        return self.matrix * self.column_sds + self.column_means


@dataclass(frozen=True)
class Response:
    values: np.ndarray
    mean: float
    family: str = GAUSSIAN

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def raw(self) -> np.ndarray:
        if self.family == GAUSSIAN:
            return self.values + self.mean
        return self.values


def _parse_error(msg: str, path) -> DataError:
    return DataError(f"{path}: {msg}")


def read_numeric_csv(path, has_header: bool = True) -> tuple[np.ndarray, tuple[str, ...] | None]:
    """Parse a rectangular numeric CSV file.

    Rows are numbered from 1 over data rows (the header is not counted);
    columns are numbered from 1.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    if not rows:
        raise _parse_error("empty input", path)
    header = None
    if has_header:
        header = tuple(cell.strip() for cell in rows[0])
        rows = rows[1:]
        if not rows:
            raise _parse_error("empty input (header only)", path)
    width = len(header) if header is not None else len(rows[0])
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows, start=1):
        if len(row) != width:
            raise _parse_error(f"ragged row {i}: expected {width} fields, got {len(row)}", path)
        for j, cell in enumerate(row, start=1):
            text = cell.strip()
            try:
                value = float(text)
            except ValueError:
                raise _parse_error(f"non-numeric cell at (row {i}, col {j}): {text!r}", path) from None
            if not math.isfinite(value):
                raise _parse_error(f"missing or non-finite value at (row {i}, col {j})", path)
            out[i - 1, j - 1] = value
    return out, header


def load_view(path, has_header: bool = True, name: str | None = None) -> DataView:
    matrix, header = read_numeric_csv(path, has_header)
    return DataView(name or Path(path).stem, matrix, header or ())


def load_response(path, has_header: bool = True) -> np.ndarray:
    matrix, _ = read_numeric_csv(path, has_header)
    if matrix.shape[1] != 1:
        raise DataError(f"{path}: response file must have exactly one column, got {matrix.shape[1]}")
    return matrix[:, 0]


def write_csv(path, matrix, column_names: Sequence[str] | None = None) -> None:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        if column_names is not None:
            w.writerow(column_names)
        for row in matrix:
            w.writerow([repr(float(v)) for v in row])


def standardize(view: DataView) -> StandardizedView:
    m = view.matrix
    n = m.shape[0]
    if n < 2:
        raise DataError(f"view {view.name!r}: insufficient rows to standardize (n={n})")
    means = m.mean(axis=0)
    centered = m - means
    sds = np.sqrt(np.mean(centered**2, axis=0))
    const = sds <= _CONST_TOL * np.maximum(1.0, np.abs(means))
    sds = np.where(const, 1.0, sds)
    z = centered / sds
    z[:, const] = 0.0
    z.setflags(write=False)
    return StandardizedView(z, means, sds, view.name, view.column_names)


def center_response(y, family: str = GAUSSIAN) -> Response:
    y = np.asarray(y, dtype=float).ravel()
    if family not in FAMILIES:
        raise DataError(f"unknown family {family!r}")
    if y.size == 0:
        raise DataError("empty response")
    if not np.all(np.isfinite(y)):
        raise DataError("response has NaN or Inf entries")
    mean = float(y.mean())
    if family == BINOMIAL:
        if not np.all((y == 0) | (y == 1)):
            raise DataError("binomial response must take values in {0, 1}")
        values = y.copy()
    else:
        values = y - mean
    values.setflags(write=False)
    return Response(values, mean, family)


@dataclass(frozen=True)
class MultiViewDataset:
    """Standardized views plus a shared response.

    ``raw`` keeps the unstandardized views so row subsets (CV folds) can be
    re-standardized on their own rows.
    """

    views: tuple[StandardizedView, ...]
    response: Response
    raw: tuple[DataView, ...] = field(default=(), repr=False)
    raw_y: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.views) < 1:
            raise DataError("a dataset needs at least one view")
        names = [v.source_name for v in self.views]
        if len(set(names)) != len(names):
            raise DataError(f"view names must be unique, got {names}")
        for v in self.views:
            if v.n != self.response.n:
                raise DataError(
                    f"view {v.source_name!r} has {v.n} rows but the response has {self.response.n}"
                )

    @classmethod
    def build(cls, views: Sequence[DataView | np.ndarray], y, family: str = GAUSSIAN,
              names: Sequence[str] | None = None) -> "MultiViewDataset":
        raw = []
        for i, v in enumerate(views):
            if not isinstance(v, DataView):
                v = DataView(names[i] if names else f"view{i + 1}", v)
            raw.append(v)
        y = np.asarray(y, dtype=float).ravel()
        for v in raw:
            if v.n != y.size:
                raise DataError(f"view {v.name!r} has {v.n} rows but the response has {y.size}")
        return cls(tuple(standardize(v) for v in raw), center_response(y, family), tuple(raw), y)

    @property
    def n(self) -> int:
        return self.response.n

    @property
    def names(self) -> list[str]:
        return [v.source_name for v in self.views]

    @property
    def matrices(self) -> list[np.ndarray]:
        return [v.matrix for v in self.views]

    @property
    def family(self) -> str:
        return self.response.family

    def take(self, rows) -> "MultiViewDataset":
        """Row subset, re-standardized using only the selected rows."""
        if not self.raw:
            raise DataError("dataset has no raw views; build it with MultiViewDataset.build")
        return MultiViewDataset.build([v.take(rows) for v in self.raw], self.raw_y[rows], self.family)

    def reorder(self, order: Sequence[int]) -> "MultiViewDataset":
        return MultiViewDataset(
            tuple(self.views[i] for i in order), self.response,
            tuple(self.raw[i] for i in order) if self.raw else (), self.raw_y,
        )
