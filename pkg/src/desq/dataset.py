"""Datasets, preprocessing, fold plans and standardization."""
from __future__ import annotations

import csv
import enum
import hashlib
import io
import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumError,
    ConfigError,
    DatasetUnavailable,
    LabelError,
    ParseError,
    SchemaError,
)


class Task(enum.Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"

    @classmethod
    def parse(cls, text: "str | Task") -> "Task":
        if isinstance(text, Task):
            return text
        key = str(text).strip().lower()
        aliases = {
            "regression": cls.REGRESSION,
            "regress": cls.REGRESSION,
            "reg": cls.REGRESSION,
            "classification": cls.CLASSIFICATION,
            "classify": cls.CLASSIFICATION,
            "binary": cls.CLASSIFICATION,
            "clf": cls.CLASSIFICATION,
        }
        if key not in aliases:
            raise ConfigError(f"unknown task {text!r}")
        return aliases[key]


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    task: Task
    feature_names: tuple

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.X, dtype=float))
        Y = np.ascontiguousarray(np.asarray(self.Y, dtype=float).reshape(-1))
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise SchemaError(f"X must be a nonempty 2-D matrix, got shape {X.shape}")
        if Y.shape[0] != X.shape[0]:
            raise SchemaError(f"{Y.shape[0]} labels for {X.shape[0]} rows")
        if not (np.isfinite(X).all() and np.isfinite(Y).all()):
            raise ParseError("non-finite value in data")
        if self.task is Task.CLASSIFICATION and not np.isin(Y, (0.0, 1.0)).all():
            raise LabelError("classification labels must be 0 or 1")
        names = tuple(self.feature_names) if self.feature_names else tuple(
            f"x{j}" for j in range(X.shape[1])
        )
        if len(names) != X.shape[1]:
            raise SchemaError(f"{len(names)} feature names for {X.shape[1]} columns")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, X=self.X[idx], Y=self.Y[idx])

    def concat(self, other: "Dataset") -> "Dataset":
        if other.d != self.d:
            raise SchemaError(f"cannot concatenate d={self.d} with d={other.d}")
        return replace(self, X=np.vstack([self.X, other.X]), Y=np.concatenate([self.Y, other.Y]))


def _parse_rows(text: str, source: str):
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(f"{source}: empty file") from None
    header = [h.strip() for h in header]
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"{source}:{lineno}: expected {len(header)} cells, got {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError as exc:
            raise ParseError(f"{source}:{lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in vals):
            raise ParseError(f"{source}:{lineno}: non-finite value")
        rows.append(vals)
    return header, rows


def read_table(path) -> tuple[list, np.ndarray]:
    """Parse a numeric CSV into (header, matrix)."""
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"{path}: no such file")
    header, rows = _parse_rows(path.read_text(encoding="utf-8"), str(path))
    mat = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return header, mat


def _from_table(header, mat, task: Task, label_column, source) -> Dataset:
    if label_column is None:
        label_column = header[-1]
    if label_column not in header:
        raise ParseError(f"{source}: label column {label_column!r} not in header")
    j = header.index(label_column)
    if mat.shape[0] == 0:
        raise ParseError(f"{source}: no data rows")
    names = [h for i, h in enumerate(header) if i != j]
    X = np.delete(mat, j, axis=1)
    Y = mat[:, j]
    if task is Task.CLASSIFICATION and not np.isin(Y, (0.0, 1.0)).all():
        bad = Y[~np.isin(Y, (0.0, 1.0))][0]
        raise LabelError(f"{source}: label {bad!r} is not 0/1")
    return Dataset(X, Y, task, tuple(names))


def load_csv(path, task, label_column: str | None = None) -> Dataset:
    """Load a CSV file; the label column defaults to the last column."""
    task = Task.parse(task)
    header, mat = read_table(path)
    return _from_table(header, mat, task, label_column, str(path))


def load_features_csv(path, feature_names=None) -> tuple[list, np.ndarray]:
    """Load an unlabeled feature matrix; extra columns named in the header are dropped."""
    header, mat = read_table(path)
    if feature_names is None:
        return header, mat
    missing = [f for f in feature_names if f not in header]
    if missing:
        raise SchemaError(f"{path}: missing feature columns {missing}")
    cols = [header.index(f) for f in feature_names]
    return list(feature_names), mat[:, cols]


# Vendored benchmark files: name -> (file, task, label column)
BUILTIN = {
    "pima": ("pima.csv", Task.CLASSIFICATION, "outcome"),
    "spambase": ("spambase.csv", Task.CLASSIFICATION, "spam"),
    "boston": ("boston.csv", Task.REGRESSION, "MEDV"),
    "blood": ("transfusion.csv", Task.CLASSIFICATION, None),
}
DATA_DIR_ENV = "DESQ_DATA_DIR"


def _checksums() -> dict:
    text = resources.files("desq").joinpath("data/SHA256SUMS").read_text()
    out = {}
    for line in text.splitlines():
        if line.strip():
            digest, name = line.split()
            out[name] = digest
    return out


def _vendored(fname: str) -> Path:
    return Path(str(resources.files("desq").joinpath("data", fname)))


def builtin_path(name: str) -> Path:
    """Locate a benchmark file: ``$DESQ_DATA_DIR`` first, then the vendored copy."""
    if name not in BUILTIN:
        raise ConfigError(f"unknown dataset {name!r}; choose from {sorted(BUILTIN)}")
    fname = BUILTIN[name][0]
    extra = os.environ.get(DATA_DIR_ENV)
    if extra and (Path(extra) / fname).is_file():
        return Path(extra) / fname
    vendored = _vendored(fname)
    if vendored.is_file():
        return vendored
    raise DatasetUnavailable(
        f"dataset {name!r} is not vendored; place {fname} in ${DATA_DIR_ENV}"
    )


def load_builtin(name: str, verify: bool = True) -> Dataset:
    """Load a benchmark dataset. Vendored files are checksum-verified."""
    path = builtin_path(name)
    fname, task, label = BUILTIN[name]
    sums = _checksums()
    if verify and fname in sums and path == _vendored(fname):
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        if digest != sums[fname]:
            raise ChecksumError(f"{path}: checksum mismatch")
    return load_csv(path, task, label)


def available_builtins() -> list:
    out = []
    for name in BUILTIN:
        try:
            builtin_path(name)
        except DatasetUnavailable:
            continue
        out.append(name)
    return out


BOSTON_RAW = (
    "CRIM", "ZN", "INDUS", "CHAS", "NOX", "RM", "AGE",
    "DIS", "RAD", "TAX", "PTRATIO", "B", "LSTAT",
)
BOSTON_KEEP = ("LSTAT", "INDUS", "NOX", "PTRATIO", "RM", "TAX", "DIS", "AGE")


def preprocess_boston(raw: Dataset, log_features: bool = True) -> Dataset:
    """Keep the eight correlated Boston features and remove skew with log(1+x)."""
    missing = [c for c in BOSTON_RAW if c not in raw.feature_names]
    if missing:
        raise SchemaError(f"not a raw Boston table; missing {missing}")
    cols = [raw.feature_names.index(c) for c in BOSTON_KEEP]
    X = raw.X[:, cols]
    if log_features:
        if (X <= -1).any():
            raise SchemaError("log(1+x) undefined for values <= -1")
        X = np.log1p(X)
    return Dataset(X, raw.Y, raw.task, BOSTON_KEEP)


def load_benchmark(name: str) -> Dataset:
    ds = load_builtin(name)
    return preprocess_boston(ds) if name == "boston" else ds


@dataclass(frozen=True)
class FoldPlan:
    n_folds: int
    test_fraction: float
    seed: int
    splits: tuple = field(repr=False)

    def to_text(self) -> str:
        out = io.StringIO()
        out.write("fold,role,row_index\n")
        for f, (tr, te) in enumerate(self.splits):
            for role, idx in (("train", tr), ("test", te)):
                for i in idx:
                    out.write(f"{f},{role},{int(i)}\n")
        return out.getvalue()


def make_folds(ds_or_n, n_folds: int, test_fraction: float, seed: int) -> FoldPlan:
    """Independent random train/test splits; fold f uses seed ``seed + f``."""
    n = ds_or_n if isinstance(ds_or_n, (int, np.integer)) else ds_or_n.n
    if n_folds < 1:
        raise ConfigError("n_folds must be >= 1")
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError("test_fraction must lie in (0, 1)")
    n_test = int(round(test_fraction * n))
    if n_test < 1 or n_test >= n:
        raise ConfigError(f"test split of {n_test} rows out of {n} is degenerate")
    splits = []
    for f in range(n_folds):
        perm = np.random.default_rng(seed + f).permutation(n)
        test = np.sort(perm[:n_test])
        train = np.sort(perm[n_test:])
        splits.append((train, test))
    return FoldPlan(n_folds, float(test_fraction), int(seed), tuple(splits))


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    stds: np.ndarray
    label_min: float
    label_max: float
    scale_labels: bool

    def apply(self, ds: Dataset) -> Dataset:
        if ds.d != self.means.shape[0]:
            raise SchemaError(f"standardizer fitted on d={self.means.shape[0]}, got d={ds.d}")
        X = self.transform_X(ds.X)
        Y = self.transform_y(ds.Y) if self.scale_labels else ds.Y
        return replace(ds, X=X, Y=Y)

    def transform_X(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.means) / self.stds

    def _span(self) -> float:
        span = self.label_max - self.label_min
        return span if span > 0 else 1.0

    def transform_y(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.label_min) / self._span()

    def inverse_y(self, y) -> np.ndarray:
        if not self.scale_labels:
            return np.asarray(y, dtype=float)
        return np.asarray(y, dtype=float) * self._span() + self.label_min

    def to_text(self) -> str:
        lines = ["# desq-standardizer v1", "name,value_a,value_b"]
        lines.append(f"labels,{self.label_min!r},{self.label_max!r}")
        lines.append(f"scale_labels,{int(self.scale_labels)},0")
        for m, s in zip(self.means, self.stds):
            lines.append(f"feature,{float(m)!r},{float(s)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Standardizer":
        means, stds = [], []
        lo = hi = 0.0
        scale = False
        for line in text.splitlines():
            if not line or line.startswith("#") or line.startswith("name,"):
                continue
            kind, a, b = line.split(",")
            if kind == "labels":
                lo, hi = float(a), float(b)
            elif kind == "scale_labels":
                scale = bool(int(a))
            elif kind == "feature":
                means.append(float(a))
                stds.append(float(b))
            else:
                raise ParseError(f"standardizer: unknown row kind {kind!r}")
        return cls(np.array(means), np.array(stds), lo, hi, scale)


def fit_standardizer(ds: Dataset, train_idx=None) -> Standardizer:
    """Fit on the training rows only. Regression labels are min-max scaled to [0, 1]."""
    idx = np.arange(ds.n) if train_idx is None else np.asarray(train_idx, dtype=np.int64)
    if idx.size == 0:
        raise ConfigError("standardizer needs at least one training row")
    X = ds.X[idx]
    # constant columns get their exact value as mean; rounding in X.mean would leave a tiny std
    const = X.max(axis=0) == X.min(axis=0)
    means = np.where(const, X[0], X.mean(axis=0))
    stds = X.std(axis=0)
    stds = np.where(const | (stds == 0), 1.0, stds)
    y = ds.Y[idx]
    return Standardizer(
        means, stds, float(y.min()), float(y.max()), ds.task is Task.REGRESSION
    )


def apply(std: Standardizer, ds: Dataset) -> Dataset:
    return std.apply(ds)
