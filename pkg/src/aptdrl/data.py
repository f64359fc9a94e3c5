"""Record containers and their CSV representations.

A :class:`Dataset` carries string labels straight out of ingest; a
:class:`DataSplit` carries integer label codes and is what the learners see.
Both keep the feature matrix as one dense ``float64`` array.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AptError, DimensionMismatch

SYNTHETIC_PREFIX = "synthetic-"


@dataclass(frozen=True)
class FeatureRecord:
    sha256: str
    label: str
    features: np.ndarray


def _as_matrix(X, n: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1 and n == 0:
        X = X.reshape(0, 0)
    if X.ndim != 2 or X.shape[0] != n:
        raise DimensionMismatch(f"feature matrix shape {X.shape} does not match {n} records")
    return X


@dataclass
class Dataset:
    ids: list[str]
    labels: list[str]
    X: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.ids = list(self.ids)
        self.labels = list(self.labels)
        if len(self.ids) != len(self.labels):
            raise DimensionMismatch("ids and labels differ in length")
        self.X = _as_matrix(self.X, len(self.ids))
        if not self.feature_names:
            self.feature_names = [f"f{i}" for i in range(self.X.shape[1])]
        if len(self.feature_names) != self.X.shape[1]:
            raise DimensionMismatch("feature_names length differs from feature width")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def records(self) -> list[FeatureRecord]:
        return [FeatureRecord(i, l, self.X[n]) for n, (i, l) in enumerate(zip(self.ids, self.labels))]

    def class_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for label in self.labels:
            counts[label] = counts.get(label, 0) + 1
        return counts


@dataclass
class DataSplit:
    """Label-coded records; ``classes[code]`` is the label string for ``code``."""

    ids: list[str]
    y: np.ndarray
    X: np.ndarray
    classes: list[str]

    def __post_init__(self):
        self.ids = list(self.ids)
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if len(self.y) != len(self.ids):
            raise DimensionMismatch("ids and label codes differ in length")
        self.X = _as_matrix(self.X, len(self.ids))
        self.classes = list(self.classes)
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= len(self.classes)):
            raise DimensionMismatch("label code outside the codebook")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def synthetic(self) -> np.ndarray:
        return np.array([i.startswith(SYNTHETIC_PREFIX) for i in self.ids], dtype=bool)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.num_classes)

    def subset(self, idx: Sequence[int] | np.ndarray) -> "DataSplit":
        idx = np.asarray(idx, dtype=np.int64)
        return DataSplit([self.ids[i] for i in idx], self.y[idx], self.X[idx], self.classes)

    def with_features(self, X: np.ndarray) -> "DataSplit":
        return DataSplit(self.ids, self.y, X, self.classes)


def format_float(x: float) -> str:
    # shortest repr round-trips exactly
    return repr(float(x))


def _write_rows(path: Path, header: list[str], rows) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_dataset_csv(dataset: Dataset, path: str | Path) -> None:
    header = ["sha256", "label"] + [f"f{i}" for i in range(dataset.dim)]
    rows = (
        [sid, label] + [format_float(v) for v in row]
        for sid, label, row in zip(dataset.ids, dataset.labels, dataset.X)
    )
    _write_rows(Path(path), header, rows)


def write_split_csv(split: DataSplit, path: str | Path) -> None:
    header = ["sha256", "label_code"] + [f"f{i}" for i in range(split.dim)]
    rows = (
        [sid, str(int(code))] + [format_float(v) for v in row]
        for sid, code, row in zip(split.ids, split.y, split.X)
    )
    _write_rows(Path(path), header, rows)


def _read_table(path: Path, label_column: str):
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise AptError(f"{path}: empty file, expected a header row") from None
        if header[:2] != ["sha256", label_column]:
            raise AptError(f"{path}: header must start with sha256,{label_column}")
        dim = len(header) - 2
        if header[2:] != [f"f{i}" for i in range(dim)]:
            raise AptError(f"{path}: feature columns must be f0..f{dim - 1}")
        ids, labels, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise AptError(f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}")
            ids.append(row[0])
            labels.append(row[1])
            try:
                rows.append([float(v) for v in row[2:]])
            except ValueError as exc:
                raise AptError(f"{path}: line {lineno}: {exc}") from None
    X = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    return ids, labels, X


def read_dataset_csv(path: str | Path) -> Dataset:
    ids, labels, X = _read_table(Path(path), "label")
    return Dataset(ids, labels, X)


def read_split_csv(path: str | Path, classes: list[str] | None = None) -> DataSplit:
    ids, codes, X = _read_table(Path(path), "label_code")
    try:
        y = np.array([int(c) for c in codes], dtype=np.int64)
    except ValueError as exc:
        raise AptError(f"{path}: bad label code: {exc}") from None
    if classes is None:
        k = int(y.max()) + 1 if len(y) else 0
        classes = [str(c) for c in range(k)]
    return DataSplit(ids, y, X, classes)
