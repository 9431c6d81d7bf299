"""Datasets: normalization, a synthetic two-blob generator and CSV ingestion."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = ["Dataset", "normalize_features", "make_blobs", "load_csv_dataset",
           "save_csv_dataset", "train_test_split"]


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError("features must be (n, d) and labels (n,)")
        if not np.all(np.isfinite(X)):
            raise ValueError("features contain missing or non-finite values")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be +1 or -1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self):
        return self.features.shape[0]

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(self.features[idx], self.labels[idx])


def normalize_features(X):
    """Center each column and divide by its (population) standard deviation.

    Constant columns are dropped with a warning. Returns ``(Z, kept_mask)``.
    """
    X = np.asarray(X, dtype=float)
    std = X.std(axis=0)
    keep = std > 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0))
    if not np.all(keep):
        warnings.warn(f"dropping {int(np.sum(~keep))} constant feature column(s)",
                      RuntimeWarning, stacklevel=2)
    Xk = X[:, keep]
    Z = (Xk - Xk.mean(axis=0)) / std[keep]
    return Z, keep


def make_blobs(n_train=60, n_test=20, dim=2, separation=4.0, seed=0):
    """Two unit-variance Gaussian classes whose means are ``separation`` apart.

    Classes alternate so both splits are balanced. Features are normalized
    over the pooled sample before splitting. Returns ``(train, test)``.
    """
    rng = np.random.default_rng(seed)
    n = n_train + n_test
    labels = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    centre = np.zeros(dim)
    centre[0] = 0.5 * separation
    X = rng.standard_normal((n, dim)) + labels[:, None] * centre
    perm = rng.permutation(n)
    X, labels = X[perm], labels[perm]
    Z, _ = normalize_features(X)
    data = Dataset(Z, labels)
    return data.subset(np.arange(n_train)), data.subset(np.arange(n_train, n))


def train_test_split(data: Dataset, train_fraction=0.8, seed=0):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(data.n)
    k = int(round(train_fraction * data.n))
    return data.subset(np.sort(perm[:k])), data.subset(np.sort(perm[k:]))


def _parse_label(raw, row_no):
    try:
        v = float(raw)
    except ValueError:
        raise ValueError(f"row {row_no}: non-numeric label {raw!r}") from None
    return v


def load_csv_dataset(path, label_column, normalize=True):
    """Read a comma-separated file with a header row.

    Labels may be +-1 or 0/1 (remapped to -1/+1). Features are normalized
    unless ``normalize=False``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if len(rows) < 2:
        raise ValueError(f"{path}: empty dataset")
    header = [h.strip() for h in rows[0]]
    if label_column not in header:
        raise ValueError(f"{path}: label column {label_column!r} not in header")
    li = header.index(label_column)
    feats, labels = [], []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {i} has {len(row)} cells, expected {len(header)}")
        labels.append(_parse_label(row[li].strip(), i))
        vals = []
        for j, cell in enumerate(row):
            if j == li:
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise ValueError(f"{path}: row {i}: non-numeric cell {cell!r}") from None
        feats.append(vals)
    y = np.array(labels)
    uniq = set(np.unique(y).tolist())
    if uniq <= {0.0, 1.0}:
        y = 2.0 * y - 1.0
    elif not uniq <= {-1.0, 1.0}:
        raise ValueError(f"{path}: labels must be in {{-1,+1}} or {{0,1}}, got {sorted(uniq)}")
    X = np.array(feats, dtype=float)
    if normalize:
        X, _ = normalize_features(X)
    return Dataset(X, y)


def save_csv_dataset(data: Dataset, path, label_column="label"):
    d = data.features.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i}" for i in range(d)] + [label_column])
        for row, lab in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])
