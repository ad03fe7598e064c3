"""Dataset ingestion, preprocessing, splitting and (de)serialization.

Features are stored column-major so a coordinate update touches one
contiguous column. Categorical columns are parsed to modality codes at
ingestion and one-hot expanded by the preprocessor; rows with non-finite
values are dropped with a count. CSV files follow RFC-4180 quoting;
results stream out as newline-delimited JSON records.
"""

import csv
import json
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

REGRESSION = "regression"
BINARY = "binary"
MULTICLASS = "multiclass"
CLASSIFICATION_TASKS = (BINARY, MULTICLASS)


@dataclass(frozen=True)
class Column:
    name: str
    kind: str  # "continuous" | "categorical"
    modalities: Optional[tuple] = None  # first-appearance order
    onehot_group: Optional[str] = None  # original column for one-hot members


@dataclass
class Dataset:
    X: np.ndarray  # (n, d) float64, column-major
    y: np.ndarray  # float64 for regression, int64 class codes otherwise
    columns: List[Column]
    task: str
    label_name: str = "y"
    label_classes: Optional[tuple] = None  # original class labels, code order
    dropped_rows: int = 0

    def __post_init__(self):
        if self.X.ndim != 2:
            raise ValueError("features must be 2-D")
        if len(self.columns) != self.X.shape[1]:
            raise ValueError("column metadata does not match feature count")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("feature and label counts differ")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def n_classes(self):
        if self.task == REGRESSION:
            return None
        return len(self.label_classes) if self.label_classes else int(self.y.max()) + 1

    def copy(self):
        return replace(self, X=np.asfortranarray(self.X.copy()), y=self.y.copy(),
                       columns=list(self.columns))

    def take(self, indices):
        return replace(
            self,
            X=np.asfortranarray(self.X[indices]),
            y=self.y[indices],
            columns=list(self.columns),
        )


def _try_float(token):
    try:
        return float(token)
    except ValueError:
        return None


def load_csv(path, label, task=None):
    """Parse a headed CSV into a Dataset.

    Numeric columns become continuous features; anything else becomes a
    categorical column coded by first appearance. Rows containing
    non-finite numerics are dropped and counted. ``label`` names the target
    column; ``task`` forces regression/binary/multiclass instead of
    inferring from the label values.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            rows.append(row)
    if label not in header:
        raise ValueError(f"{path}: no column named {label!r} (have {header})")
    if not rows:
        raise ValueError(f"{path}: no data rows")

    label_idx = header.index(label)
    feature_names = [h for i, h in enumerate(header) if i != label_idx]
    n_cols = len(header)

    # column typing: continuous iff every non-empty token parses to a float
    is_numeric = [True] * n_cols
    for row in rows:
        for j, tok in enumerate(row):
            if is_numeric[j] and _try_float(tok) is None:
                is_numeric[j] = False

    modalities = {}
    for j in range(n_cols):
        if not is_numeric[j]:
            seen = {}
            for row in rows:
                if row[j] not in seen:
                    seen[row[j]] = len(seen)
            modalities[j] = seen

    parsed = np.empty((len(rows), n_cols))
    keep = np.ones(len(rows), dtype=bool)
    for i, row in enumerate(rows):
        for j, tok in enumerate(row):
            if is_numeric[j]:
                v = _try_float(tok)
                if v is None or not math.isfinite(v):
                    keep[i] = False
                    v = np.nan
                parsed[i, j] = v if v is not None else np.nan
            else:
                parsed[i, j] = modalities[j][tok]
    dropped = int((~keep).sum())
    parsed = parsed[keep]

    feat_idx = [i for i in range(n_cols) if i != label_idx]
    X = np.asfortranarray(parsed[:, feat_idx])
    columns = []
    for j, name in zip(feat_idx, feature_names):
        if is_numeric[j]:
            columns.append(Column(name=name, kind="continuous"))
        else:
            mods = tuple(sorted(modalities[j], key=modalities[j].get))
            columns.append(Column(name=name, kind="categorical", modalities=mods))

    raw_label = parsed[:, label_idx]
    if task is None:
        if not is_numeric[label_idx]:
            task = MULTICLASS if len(modalities[label_idx]) > 2 else BINARY
        else:
            task = REGRESSION
    label_classes = None
    if task == REGRESSION:
        y = raw_label.astype(np.float64)
    else:
        if is_numeric[label_idx]:
            classes = np.unique(raw_label)
            codes = {v: c for c, v in enumerate(classes)}
            y = np.array([codes[v] for v in raw_label], dtype=np.int64)
            label_classes = tuple(
                int(v) if float(v).is_integer() else float(v) for v in classes
            )
        else:
            y = raw_label.astype(np.int64)
            label_classes = tuple(sorted(modalities[label_idx], key=modalities[label_idx].get))
        if task == BINARY and len(label_classes) != 2:
            raise ValueError(f"binary task needs 2 classes, found {len(label_classes)}")
        if task == MULTICLASS and len(label_classes) < 2:
            raise ValueError("multiclass task needs at least 2 classes")

    return Dataset(
        X=X,
        y=y,
        columns=columns,
        task=task,
        label_name=label,
        label_classes=label_classes,
        dropped_rows=dropped,
    )


def save_csv(dataset, path):
    """Write a Dataset back to CSV; floats keep 17 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([c.name for c in dataset.columns] + [dataset.label_name])
        for i in range(dataset.n):
            row = []
            for j, col in enumerate(dataset.columns):
                v = dataset.X[i, j]
                if col.kind == "categorical":
                    row.append(col.modalities[int(v)])
                else:
                    row.append(repr(float(v)))
            if dataset.task == REGRESSION:
                row.append(repr(float(dataset.y[i])))
            elif dataset.label_classes:
                row.append(dataset.label_classes[int(dataset.y[i])])
            else:
                row.append(int(dataset.y[i]))
            writer.writerow(row)


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.70
    val: float = 0.15
    test: float = 0.15
    seed: int = 0

    def __post_init__(self):
        total = self.train + self.val + self.test
        if min(self.train, self.val, self.test) <= 0:
            raise ValueError("split fractions must be positive")
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {total}")


def split(dataset, spec):
    """Disjoint train/val/test partition via a seeded shuffle.

    Val and test take floor(fraction * n) rows each; the remainder goes to
    train.
    """
    n = dataset.n
    if n < 3:
        raise ValueError("need at least 3 rows to split")
    perm = np.random.default_rng(spec.seed).permutation(n)
    n_val = int(spec.val * n)
    n_test = int(spec.test * n)
    n_train = n - n_val - n_test
    train_idx = np.sort(perm[:n_train])
    val_idx = np.sort(perm[n_train : n_train + n_val])
    test_idx = np.sort(perm[n_train + n_val :])
    return dataset.take(train_idx), dataset.take(val_idx), dataset.take(test_idx)


class Preprocessor:
    """Standardize continuous columns, one-hot expand categorical ones.

    Fit on the training split only; transforming other splits reuses the
    training statistics (leakage guard). Constant columns scale to zeros
    via the std floor.
    """

    STD_FLOOR = 1e-12

    def __init__(self):
        self.fitted = False
        self.means = None
        self.stds = None
        self.source_columns = None

    def fit(self, dataset):
        self.source_columns = list(dataset.columns)
        means = []
        stds = []
        for j, col in enumerate(dataset.columns):
            if col.kind == "continuous":
                means.append(float(dataset.X[:, j].mean()))
                stds.append(max(float(dataset.X[:, j].std()), self.STD_FLOOR))
            else:
                means.append(0.0)
                stds.append(1.0)
        self.means = np.array(means)
        self.stds = np.array(stds)
        self.fitted = True
        return self

    def transform(self, dataset):
        if not self.fitted:
            raise RuntimeError("preprocessor not fitted")
        out_cols = []
        out_meta = []
        for j, col in enumerate(self.source_columns):
            if col.kind == "continuous":
                out_cols.append((dataset.X[:, j] - self.means[j]) / self.stds[j])
                out_meta.append(col)
            else:
                codes = dataset.X[:, j].astype(np.int64)
                for c, modality in enumerate(col.modalities):
                    out_cols.append((codes == c).astype(np.float64))
                    out_meta.append(
                        Column(
                            name=f"{col.name}={modality}",
                            kind="continuous",
                            onehot_group=col.name,
                        )
                    )
        X = np.asfortranarray(np.column_stack(out_cols))
        return replace(dataset, X=X, columns=out_meta)

    def fit_transform(self, dataset):
        return self.fit(dataset).transform(dataset)

    def to_dict(self):
        return {
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "columns": [
                {"name": c.name, "kind": c.kind, "modalities": list(c.modalities) if c.modalities else None}
                for c in self.source_columns
            ],
        }

    @classmethod
    def from_dict(cls, payload):
        pre = cls()
        pre.means = np.asarray(payload["means"], dtype=np.float64)
        pre.stds = np.asarray(payload["stds"], dtype=np.float64)
        pre.source_columns = [
            Column(
                name=c["name"],
                kind=c["kind"],
                modalities=tuple(c["modalities"]) if c["modalities"] else None,
            )
            for c in payload["columns"]
        ]
        pre.fitted = True
        return pre


def preprocess(dataset):
    """Fit-and-transform convenience for single-split use."""
    return Preprocessor().fit_transform(dataset)


class LabelScaler:
    """Center/scale regression labels; fit on the training split."""

    def __init__(self):
        self.mean = 0.0
        self.std = 1.0

    def fit(self, y):
        self.mean = float(np.mean(y))
        self.std = max(float(np.std(y)), Preprocessor.STD_FLOOR)
        return self

    def transform(self, y):
        return (y - self.mean) / self.std

    def inverse(self, y):
        return y * self.std + self.mean


RECORD_FIELDS = (
    "run_id",
    "algo",
    "estimator",
    "params",
    "cycle",
    "metric_name",
    "metric_value",
    "elapsed_ns",
    "seed",
)


def write_ndjson(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_ndjson(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
