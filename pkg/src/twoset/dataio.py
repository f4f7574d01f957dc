"""Reading raw CSV files and building the two-set data objects.

Every observation carries a dataset label: 0 for the low-precision (or first)
source and 1 for the high-precision (or second) source.  Predictors are
standardized separately inside each labelled subset.
"""

from __future__ import annotations

import csv
import hashlib
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "DataError",
    "DataVersionWarning",
    "RawTable",
    "TwoSetData",
    "StandardizedData",
    "load_csv",
    "partition_diabetes",
    "build_geyser",
    "from_labelled_table",
    "standardize",
    "DIABETES_PREDICTORS",
    "GEYSER_PREDICTORS",
]

DIABETES_PREDICTORS = ("age", "sex", "bmi", "bp", "s1", "s2", "s3", "s4", "s5", "s6")
GEYSER_PREDICTORS = ("duration", "short")

_DIABETES_SIZES = (377, 65)
_GEYSER_SIZES = (77, 221)
_FRACTION_TOL = 1e-9
_STD_TOL = 1e-10


class DataError(ValueError):
    """Malformed input file or a table that does not fit the requested layout."""


class DataVersionWarning(UserWarning):
    """Partition sizes differ from the canonical version of a public dataset."""


@dataclass(frozen=True)
class RawTable:
    columns: tuple[str, ...]
    values: np.ndarray
    source: str | None = None
    sha256: str | None = None

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise DataError("table is not rectangular")
        if not np.all(np.isfinite(self.values)):
            raise DataError("table contains non-finite cells")

    @property
    def shape(self):
        return self.values.shape

    def column(self, name: str) -> np.ndarray:
        lookup = {c.lower(): i for i, c in enumerate(self.columns)}
        try:
            return self.values[:, lookup[name.lower()]]
        except KeyError:
            raise DataError(f"column {name!r} not found; have {list(self.columns)}") from None


@dataclass(frozen=True)
class TwoSetData:
    """Response, candidate predictors and a 0/1 dataset label per row."""

    y: np.ndarray
    X: np.ndarray
    label: np.ndarray
    columns: tuple[str, ...]

    def __post_init__(self):
        n = self.y.shape[0]
        if self.X.ndim != 2 or self.X.shape[0] != n or self.label.shape != (n,):
            raise DataError("y, X and label disagree in length")
        if self.X.shape[1] != len(self.columns):
            raise DataError("column names do not match X")
        if not np.isin(self.label, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        if self.n_j(0) == 0 or self.n_j(1) == 0:
            raise DataError("both datasets must be non-empty")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n_predictors(self) -> int:
        return self.X.shape[1]

    def n_j(self, j: int) -> int:
        return int(np.count_nonzero(self.label == j))

    def subset(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X_j, y_j)`` for dataset ``j`` in original row order."""
        mask = self.label == j
        return self.X[mask], self.y[mask]

    def column_index(self, name: str | int) -> int:
        if isinstance(name, (int, np.integer)):
            if not 0 <= name < self.n_predictors:
                raise DataError(f"column index {name} out of range")
            return int(name)
        lookup = {c.lower(): i for i, c in enumerate(self.columns)}
        key = str(name).lower()
        if key in lookup:
            return lookup[key]
        # x1..xK refer to predictors by 1-based position
        if key.startswith("x") and key[1:].isdigit() and 1 <= int(key[1:]) <= self.n_predictors:
            return int(key[1:]) - 1
        raise DataError(f"unknown predictor {name!r}; have {list(self.columns)}")

    def relabel(self) -> "TwoSetData":
        """Swap the roles of datasets 0 and 1."""
        return TwoSetData(self.y, self.X, 1 - self.label, self.columns)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for a in (self.y, self.X, self.label):
            h.update(np.ascontiguousarray(a, dtype=float).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class StandardizedData(TwoSetData):
    """Two-set data whose predictors are standardized within each dataset.

    ``location[j]`` and ``scale[j]`` hold the per-column transform applied to
    dataset ``j``; untouched constant columns have location 0 and scale 1.
    """

    location: np.ndarray | None = None
    scale: np.ndarray | None = None

    def relabel(self) -> "StandardizedData":
        return StandardizedData(
            self.y, self.X, 1 - self.label, self.columns,
            location=self.location[::-1].copy(), scale=self.scale[::-1].copy(),
        )


def _parse_cell(text: str, row: int, col: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"non-numeric cell {text!r} at row {row}, column {col}") from None
    if not math.isfinite(value):
        raise DataError(f"non-finite cell {text!r} at row {row}, column {col}")
    return value


def load_csv(path: str | Path, has_header: bool = True) -> RawTable:
    """Read a numeric CSV file.

    Rows are numbered from 1 counting the header line, so error messages
    point at the line an editor would show.
    """
    path = Path(path)
    raw = path.read_bytes()
    text = raw.decode("utf-8-sig")
    reader = csv.reader(text.splitlines())
    rows = [r for r in reader if r and any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    if has_header:
        columns = tuple(c.strip() for c in rows[0])
        body, first = rows[1:], 2
    else:
        columns = tuple(f"c{i + 1}" for i in range(len(rows[0])))
        body, first = rows, 1
    width = len(columns)
    values = np.empty((len(body), width))
    for i, r in enumerate(body):
        line = first + i
        if len(r) != width:
            raise DataError(f"{path}: row {line} has {len(r)} fields, expected {width}")
        for c, cell in enumerate(r):
            values[i, c] = _parse_cell(cell.strip(), line, c + 1)
    return RawTable(columns, values, source=str(path), sha256=hashlib.sha256(raw).hexdigest())


def _has_fraction(v: np.ndarray) -> np.ndarray:
    return np.abs(v - np.round(v)) > _FRACTION_TOL


def _warn_sizes(what: str, data: TwoSetData, expected: tuple[int, int]):
    observed = (data.n_j(0), data.n_j(1))
    if observed != expected:
        warnings.warn(
            f"{what}: partition sizes {observed} differ from the canonical {expected}; "
            "the input may be a different version of the dataset",
            DataVersionWarning, stacklevel=3,
        )


def partition_diabetes(table: RawTable) -> TwoSetData:
    """Split the diabetes data by measurement precision.

    A row goes to dataset 1 (precise) when blood pressure or the fourth serum
    measurement has a fractional part.  The response is the log of the
    progression measure.
    """
    names = [c.lower() for c in table.columns]
    expected = ["age", "sex", "bmi", "bp", "s1", "s2", "s3", "s4", "s5", "s6", "y"]
    if names == expected:
        values = table.values
    elif table.values.shape[1] == 11:
        values = table.values  # headerless or renamed file: positional layout
    else:
        raise DataError(f"diabetes table needs 11 columns (10 predictors + Y), got {table.values.shape[1]}")
    X = values[:, :10].copy()
    y = values[:, 10]
    if np.any(y <= 0):
        raise DataError("diabetes response must be positive to take logs")
    label = (_has_fraction(X[:, 3]) | _has_fraction(X[:, 7])).astype(int)
    data = TwoSetData(np.log(y), X, label, DIABETES_PREDICTORS)
    _warn_sizes("diabetes", data, _DIABETES_SIZES)
    return data


def build_geyser(table: RawTable) -> TwoSetData:
    """Pair each eruption's duration with the log of the next waiting time.

    Predictors are the duration and an indicator of a short eruption
    (duration at most 2.5).  Rows whose duration is exactly 2, 3 or 4 are the
    rounded night-time records and form dataset 0.
    """
    waiting = table.column("waiting")
    duration = table.column("duration")
    if waiting.shape[0] < 2:
        raise DataError("geyser table needs at least two eruptions")
    if np.any(waiting <= 0):
        raise DataError("waiting times must be positive")
    d = duration[:-1]
    y = np.log(waiting[1:])
    X = np.column_stack([d, (d <= 2.5).astype(float)])
    rounded = np.any(np.abs(d[:, None] - np.array([2.0, 3.0, 4.0])) <= _FRACTION_TOL, axis=1)
    label = np.where(rounded, 0, 1)
    data = TwoSetData(y, X, label, GEYSER_PREDICTORS)
    _warn_sizes("geyser", data, _GEYSER_SIZES)
    return data


def from_labelled_table(table: RawTable, label_column: str,
                        response_column: str | None = None,
                        log_response: bool = False) -> TwoSetData:
    """Generic layout: one 0/1 label column, one response, the rest predictors.

    The response defaults to the last column that is not the label.
    """
    names = list(table.columns)
    lower = [c.lower() for c in names]
    if label_column.lower() not in lower:
        raise DataError(f"label column {label_column!r} not found")
    li = lower.index(label_column.lower())
    if response_column is None:
        ri = max(i for i in range(len(names)) if i != li)
    elif response_column.lower() in lower:
        ri = lower.index(response_column.lower())
    else:
        raise DataError(f"response column {response_column!r} not found")
    label = table.values[:, li]
    if not np.isin(label, (0.0, 1.0)).all():
        raise DataError(f"label column {label_column!r} must contain only 0 and 1")
    pcols = [i for i in range(len(names)) if i not in (li, ri)]
    y = table.values[:, ri]
    if log_response:
        if np.any(y <= 0):
            raise DataError("cannot log a non-positive response")
        y = np.log(y)
    return TwoSetData(y.copy(), table.values[:, pcols].copy(), label.astype(int),
                      tuple(names[i] for i in pcols))


def standardize(data: TwoSetData) -> StandardizedData:
    """Center each predictor and scale it to unit mean square within each dataset.

    Columns that are constant over all rows are left untouched.  A column that
    varies overall but is constant inside one dataset cannot be standardized
    there and raises :class:`DataError`.
    """
    X = data.X.astype(float, copy=True)
    k = X.shape[1]
    location = np.zeros((2, k))
    scale = np.ones((2, k))
    constant = np.ptp(X, axis=0) == 0 if data.n else np.zeros(k, bool)
    for j in (0, 1):
        mask = data.label == j
        Xj = X[mask]
        mu = Xj.mean(axis=0)
        sd = np.sqrt(np.mean((Xj - mu) ** 2, axis=0))
        for c in range(k):
            if constant[c]:
                continue
            if sd[c] <= _STD_TOL * max(1.0, abs(mu[c])):
                raise DataError(f"column {data.columns[c]!r} has zero variance in dataset {j}")
            location[j, c] = mu[c]
            scale[j, c] = sd[c]
        Z = (Xj - location[j]) / scale[j]
        # a second centering pass removes rounding left by the first
        if k:
            varying = ~constant
            Z[:, varying] -= Z[:, varying].mean(axis=0)
        X[mask] = Z
    return StandardizedData(data.y.copy(), X, data.label.copy(), data.columns,
                            location=location, scale=scale)


def check_standardized(data: TwoSetData, tol: float = 1e-10) -> bool:
    """True when every varying column has mean 0 and mean square 1 per dataset."""
    constant = np.ptp(data.X, axis=0) == 0
    for j in (0, 1):
        Xj = data.X[data.label == j][:, ~constant]
        if Xj.size == 0:
            continue
        if np.max(np.abs(Xj.mean(axis=0))) > tol:
            return False
        if np.max(np.abs(np.mean(Xj ** 2, axis=0) - 1.0)) > tol:
            return False
    return True


def select_columns(data: TwoSetData, names: Sequence[str | int]) -> list[int]:
    return [data.column_index(n) for n in names]
