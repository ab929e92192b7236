"""Dataset ingestion, standardization and stratified fold splitting.

The only ingestion format is CSV (comma separated, '.' decimal, UTF-8).
A header row is optional and auto-detected: if any feature cell of the
first row fails to parse as a number, the row is treated as a header.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DataError


@dataclass
class LabeledDataset:
    """Feature matrix with labels in {-1, +1}.

    Single-class data is representable (useful for scoring files before
    labels exist); fitting routines reject it via `require_both_classes`.
    """

    X: np.ndarray
    y: np.ndarray
    columns: tuple[str, ...] | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.ndim != 2:
            raise DataError(f"feature matrix must be 2-d, got shape {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise DataError("labels must be a vector with one entry per row")
        bad = set(np.unique(self.y)) - {-1, 1}
        if bad:
            raise DataError(f"labels must be -1 or +1, found {sorted(bad)}")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @cached_property
    def pos_idx(self) -> np.ndarray:
        return np.flatnonzero(self.y == 1)

    @cached_property
    def neg_idx(self) -> np.ndarray:
        return np.flatnonzero(self.y == -1)

    @property
    def n_pos(self) -> int:
        return self.pos_idx.size

    @property
    def n_neg(self) -> int:
        return self.neg_idx.size

    @property
    def n_pairs(self) -> int:
        return self.n_pos * self.n_neg

    def require_both_classes(self) -> None:
        if self.n_pos == 0 or self.n_neg == 0:
            raise DataError(
                f"need at least one point per class, got {self.n_pos} positive "
                f"and {self.n_neg} negative"
            )

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=int)
        return LabeledDataset(self.X[idx], self.y[idx], self.columns)


@dataclass(frozen=True)
class StandardizationParams:
    """Per-column location/scale, with constant columns flagged (scale 1)."""

    mean: np.ndarray
    scale: np.ndarray
    constant: np.ndarray  # bool mask of columns with zero variance

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.mean.size:
            raise DataError(
                f"expected {self.mean.size} features, got {X.shape[-1]}"
            )
        return (X - self.mean) / self.scale

    def invert(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) * self.scale + self.mean

    @staticmethod
    def identity(d: int) -> "StandardizationParams":
        return StandardizationParams(
            np.zeros(d), np.ones(d), np.zeros(d, dtype=bool)
        )


def _try_float(token: str) -> float | None:
    try:
        return float(token)
    except ValueError:
        return None


def load_dataset(
    path,
    label_column,
    positive_label: str,
    fmt: str = "csv",
) -> LabeledDataset:
    """Load a CSV file into a LabeledDataset.

    `label_column` is a column name (requires a header row) or a 0-based
    integer index. Rows whose label equals `positive_label` (string
    comparison on the stripped cell) map to +1, all other tokens to -1,
    so one-vs-rest tasks need no preprocessing.
    """
    if fmt != "csv":
        raise DataError(f"unsupported format {fmt!r}, only 'csv' is implemented")
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        rows = [
            (lineno, [c.strip() for c in row])
            for lineno, row in enumerate(csv.reader(fh), start=1)
            if row and any(c.strip() for c in row)
        ]
    if not rows:
        raise DataError(f"{path}: file contains no data rows")

    width = len(rows[0][1])
    for lineno, row in rows:
        if len(row) != width:
            raise DataError(
                f"{path}: row at line {lineno} has {len(row)} cells, expected {width}"
            )

    by_name = isinstance(label_column, str) and _try_float(label_column) is None
    header: list[str] | None = None
    if by_name:
        header = rows[0][1]
        if label_column not in header:
            raise DataError(
                f"{path}: no column named {label_column!r} in header {header}"
            )
        label_idx = header.index(label_column)
        rows = rows[1:]
    else:
        label_idx = int(label_column)
        if not (-width <= label_idx < width):
            raise DataError(f"{path}: label column index {label_idx} out of range")
        label_idx %= width
        # Header auto-detection: any non-numeric feature cell in row one.
        first = rows[0][1]
        feature_cells = [c for i, c in enumerate(first) if i != label_idx]
        if any(_try_float(c) is None for c in feature_cells):
            header = first
            rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows after the header")

    feat_cols = [i for i in range(width) if i != label_idx]
    X = np.empty((len(rows), len(feat_cols)))
    tokens: list[str] = []
    for r, (lineno, row) in enumerate(rows):
        for c, col in enumerate(feat_cols):
            val = _try_float(row[col])
            if val is None:
                colname = header[col] if header else f"column {col + 1}"
                raise DataError(
                    f"{path}: non-numeric feature cell {row[col]!r} at line "
                    f"{lineno}, {colname}"
                )
            X[r, c] = val
        tokens.append(row[label_idx])

    seen = set(tokens)
    if positive_label not in seen:
        raise DataError(
            f"{path}: positive label {positive_label!r} never occurs; "
            f"observed labels: {sorted(seen)[:10]}"
        )
    y = np.where(np.array(tokens) == positive_label, 1, -1)
    columns = tuple(header[c] for c in feat_cols) if header else None
    return LabeledDataset(X, y, columns)


def standardize(ds: LabeledDataset) -> tuple[LabeledDataset, StandardizationParams]:
    """Center and scale every column to sample mean 0, sample sd 1 (ddof=1).

    Constant columns are left centered with scale 1 and flagged rather
    than treated as an error.
    """
    if ds.n < 2:
        raise DataError("standardization needs at least 2 rows")
    mean = ds.X.mean(axis=0)
    sd = ds.X.std(axis=0, ddof=1)
    constant = sd == 0.0
    scale = np.where(constant, 1.0, sd)
    params = StandardizationParams(mean, scale, constant)
    return LabeledDataset(params.apply(ds.X), ds.y, ds.columns), params


def load_features(path, label_column=None) -> np.ndarray:
    """Load a CSV of numeric features only (for scoring unlabeled data).

    If `label_column` names or indexes a column, that column is dropped;
    a header row is auto-detected as in load_dataset.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        rows = [
            (lineno, [c.strip() for c in row])
            for lineno, row in enumerate(csv.reader(fh), start=1)
            if row and any(c.strip() for c in row)
        ]
    if not rows:
        raise DataError(f"{path}: file contains no data rows")
    width = len(rows[0][1])
    drop = None
    header = None
    if label_column is not None:
        by_name = isinstance(label_column, str) and _try_float(label_column) is None
        if by_name:
            header = rows[0][1]
            if label_column not in header:
                raise DataError(f"{path}: no column named {label_column!r}")
            drop = header.index(label_column)
            rows = rows[1:]
        else:
            drop = int(label_column) % width
    if header is None and any(
        _try_float(c) is None for i, c in enumerate(rows[0][1]) if i != drop
    ):
        header = rows[0][1]
        rows = rows[1:]
    cols = [i for i in range(width) if i != drop]
    X = np.empty((len(rows), len(cols)))
    for r, (lineno, row) in enumerate(rows):
        for c, col in enumerate(cols):
            val = _try_float(row[col])
            if val is None:
                raise DataError(
                    f"{path}: non-numeric cell {row[col]!r} at line {lineno}, "
                    f"column {col + 1}"
                )
            X[r, c] = val
    return X


def stratified_split(
    ds: LabeledDataset, test_frac: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded single stratified train/test split; returns index arrays."""
    if not 0.0 < test_frac < 1.0:
        raise DataError("test fraction must lie in (0, 1)")
    ds.require_both_classes()
    rng = np.random.default_rng(seed)
    train_parts, test_parts = [], []
    for idx in (ds.pos_idx, ds.neg_idx):
        perm = rng.permutation(idx)
        n_test = max(1, int(round(test_frac * idx.size)))
        if n_test >= idx.size:
            raise DataError("split leaves an empty training class")
        test_parts.append(perm[:n_test])
        train_parts.append(perm[n_test:])
    return (
        np.sort(np.concatenate(train_parts)),
        np.sort(np.concatenate(test_parts)),
    )


def stratified_folds(
    ds: LabeledDataset, k: int, seed: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded stratified k-fold split.

    Returns k (train_idx, validation_idx) pairs. Validation folds are
    disjoint, cover all indices, and preserve the class ratio to within
    one sample per fold.
    """
    if k < 2:
        raise DataError(f"need k >= 2 folds, got {k}")
    ds.require_both_classes()
    if min(ds.n_pos, ds.n_neg) < k:
        raise DataError(
            f"smallest class has {min(ds.n_pos, ds.n_neg)} members, "
            f"cannot build {k} stratified folds"
        )
    rng = np.random.default_rng(seed)
    pos = rng.permutation(ds.pos_idx)
    neg = rng.permutation(ds.neg_idx)
    folds = []
    for pchunk, nchunk in zip(np.array_split(pos, k), np.array_split(neg, k)):
        val = np.sort(np.concatenate([pchunk, nchunk]))
        mask = np.ones(ds.n, dtype=bool)
        mask[val] = False
        folds.append((np.flatnonzero(mask), val))
    return folds
