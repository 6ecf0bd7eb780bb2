"""Tabular dataset loading, splitting and imputation.

Missing cells are stored as ``NaN`` inside the float matrix; ``NaN`` is the
MISSING marker and nothing else is allowed to produce it (literal ``nan`` or
``inf`` tokens in a CSV are rejected as malformed).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from protolens.errors import ClassTooSmall, EmptyDataset, MalformedCsv, UnknownLabelColumn

MISSING = float("nan")

BLOBS2_SEED = 42


def is_missing(values) -> np.ndarray:
    return np.isnan(np.asarray(values, dtype=float))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable n x d numeric table with encoded class labels."""

    feature_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    label_names: tuple[str, ...]

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        y = np.array(self.y, dtype=np.int64, copy=True)
        names = tuple(str(f) for f in self.feature_names)
        labels = tuple(str(c) for c in self.label_names)
        if X.ndim != 2:
            raise EmptyDataset("feature matrix must be two-dimensional")
        n, d = X.shape
        if n < 1 or d < 1:
            raise EmptyDataset(f"dataset needs n >= 1 and d >= 1, got n={n}, d={d}")
        if len(names) != d:
            raise MalformedCsv(f"{len(names)} feature names for {d} columns")
        if y.shape != (n,):
            raise MalformedCsv(f"expected {n} labels, got shape {y.shape}")
        if len(labels) < 2:
            raise EmptyDataset(f"need at least 2 classes, got {len(labels)}")
        if np.any(np.isinf(X)):
            raise MalformedCsv("infinite values are not allowed")
        if np.any(y < 0) or np.any(y >= len(labels)):
            raise MalformedCsv("label index out of range")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "label_names", labels)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.X)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.feature_names, self.X[idx], self.y[idx], self.label_names)

    def with_labels(self, y: Sequence[int]) -> "Dataset":
        return Dataset(self.feature_names, self.X, y, self.label_names)

    def equals(self, other: "Dataset") -> bool:
        """Cell-exact comparison (MISSING positions must coincide)."""
        return (
            self.feature_names == other.feature_names
            and self.label_names == other.label_names
            and self.X.shape == other.X.shape
            and np.array_equal(self.X, other.X, equal_nan=True)
            and np.array_equal(self.y, other.y)
        )


@dataclass(frozen=True, eq=False)
class SplitPair:
    train: Dataset
    test: Dataset
    seed: int
    train_indices: np.ndarray = field(repr=False)
    test_indices: np.ndarray = field(repr=False)


def _parse_cell(token: str, missing: set[str], row_no: int, col: str) -> float:
    if token.strip() in missing or token.strip() == "":
        return MISSING
    try:
        value = float(token)
    except ValueError:
        raise MalformedCsv(f"row {row_no}: cannot parse {token!r} in column {col!r}") from None
    if not math.isfinite(value):
        raise MalformedCsv(f"row {row_no}: non-finite value {token!r} in column {col!r}")
    return value


def read_csv_text(
    text: str,
    label_column: str,
    missing_tokens: Iterable[str] = ("",),
    label_names: Sequence[str] | None = None,
) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyDataset("file is empty") from None
    header = [h.strip() for h in header]
    if label_column not in header:
        raise UnknownLabelColumn(f"label column {label_column!r} not in header {header}")
    label_pos = header.index(label_column)
    feature_cols = [i for i in range(len(header)) if i != label_pos]
    missing = {t.strip() for t in missing_tokens}

    encoding: dict[str, int] = {}
    if label_names is not None:
        encoding = {str(name): i for i, name in enumerate(label_names)}
    rows: list[list[float]] = []
    labels: list[int] = []
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise MalformedCsv(f"row {row_no}: expected {len(header)} cells, got {len(row)}")
        raw_label = row[label_pos].strip()
        if raw_label not in encoding:
            if label_names is not None:
                raise MalformedCsv(f"row {row_no}: unknown label {raw_label!r}")
            encoding[raw_label] = len(encoding)
        labels.append(encoding[raw_label])
        rows.append([_parse_cell(row[i], missing, row_no, header[i]) for i in feature_cols])

    if not rows:
        raise EmptyDataset("no data rows")
    if len(encoding) < 2:
        raise EmptyDataset(f"label column {label_column!r} has fewer than 2 distinct values")
    return Dataset(
        feature_names=tuple(header[i] for i in feature_cols),
        X=np.array(rows, dtype=np.float64),
        y=np.array(labels, dtype=np.int64),
        label_names=tuple(encoding),
    )


def load_csv(
    path: str | Path,
    label_column: str,
    missing_tokens: Iterable[str] = ("",),
    label_names: Sequence[str] | None = None,
) -> Dataset:
    """Load a headed CSV file.

    Labels are encoded in order of first appearance unless ``label_names``
    pins the encoding explicitly. Empty cells and any of ``missing_tokens``
    become MISSING.
    """
    text = Path(path).read_text(encoding="utf-8")
    return read_csv_text(text, label_column, missing_tokens, label_names)


def _format_cell(value: float) -> str:
    return "" if math.isnan(value) else repr(float(value))


def dataset_to_csv(ds: Dataset, label_column: str = "label") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*ds.feature_names, label_column])
    for row, label in zip(ds.X, ds.y):
        writer.writerow([*(_format_cell(v) for v in row), ds.label_names[label]])
    return buf.getvalue()


def write_csv(ds: Dataset, path: str | Path, label_column: str = "label") -> None:
    Path(path).write_text(dataset_to_csv(ds, label_column), encoding="utf-8")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def stratified_split(ds: Dataset, test_fraction: float, seed: int) -> SplitPair:
    """Split rows per class so the test share of every class is
    ``round(count * test_fraction)`` clamped to ``[1, count - 1]``."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    test_parts = []
    for c in range(ds.n_classes):
        members = np.flatnonzero(ds.y == c)
        if members.size == 0:
            continue
        if members.size < 2:
            raise ClassTooSmall(f"class {ds.label_names[c]!r} has {members.size} row(s); need >= 2")
        n_test = min(max(_round_half_up(members.size * test_fraction), 1), members.size - 1)
        test_parts.append(rng.permutation(members)[:n_test])
    test_idx = np.sort(np.concatenate(test_parts))
    train_idx = np.setdiff1d(np.arange(ds.n), test_idx)
    return SplitPair(
        train=ds.subset(train_idx),
        test=ds.subset(test_idx),
        seed=seed,
        train_indices=train_idx,
        test_indices=test_idx,
    )


def column_means(X: np.ndarray) -> np.ndarray:
    """Per-feature mean over non-missing cells; all-missing columns give 0."""
    X = np.asarray(X, dtype=float)
    present = ~np.isnan(X)
    counts = present.sum(axis=0)
    sums = np.where(present, X, 0.0).sum(axis=0)
    return np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)


def mean_impute(ds: Dataset, means: np.ndarray | None = None) -> Dataset:
    """Replace MISSING cells with column means (of ``ds`` unless given)."""
    if means is None:
        means = column_means(ds.X)
    X = np.where(np.isnan(ds.X), means[None, :], ds.X)
    return Dataset(ds.feature_names, X, ds.y, ds.label_names)


def make_blobs2(seed: int = BLOBS2_SEED) -> Dataset:
    """Two unit-variance Gaussian clusters in 8 dimensions, 300 rows each,
    centred at -1.5 / +1.5 on the first three coordinates, rows shuffled."""
    rng = np.random.default_rng(seed)
    d, per_class = 8, 300
    centre = np.zeros(d)
    centre[:3] = 1.5
    X = np.vstack([
        rng.normal(size=(per_class, d)) - centre,
        rng.normal(size=(per_class, d)) + centre,
    ])
    labels = np.repeat([0, 1], per_class)
    order = rng.permutation(2 * per_class)
    X, labels = X[order], labels[order]
    # Re-encode so label indices follow first appearance, as load_csv would.
    names = ("neg", "pos")
    first = labels[0]
    if first == 1:
        names = ("pos", "neg")
        labels = 1 - labels
    return Dataset(tuple(f"x{i}" for i in range(d)), X, labels, names)


def blobs2_path() -> Path:
    return Path(str(resources.files("protolens") / "datasets" / "blobs2.csv"))


def load_blobs2() -> Dataset:
    return load_csv(blobs2_path(), label_column="label")


def regenerate_blobs2(path: str | Path | None = None) -> Path:
    """Rewrite the bundled blobs2 file from its seeded recipe."""
    target = Path(path) if path is not None else blobs2_path()
    write_csv(make_blobs2(), target)
    return target
