"""Labeled datasets, symmetric class vectors, generators and fold splits."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataParseError, DomainError, FormatVersionError

# Canonical Ripley (1994) mixture: two isotropic Gaussians per class.
RIPLEY_CENTERS = {
    "N": ((-0.3, 0.7), (0.4, 0.7)),
    "P": ((-0.7, 0.3), (0.3, 0.3)),
}
RIPLEY_VARIANCE = 0.03


def encode_class_vector(label, n_classes):
    """Symmetric class vector: 1 at ``label``, -1/(C-1) elsewhere (sums to 0)."""
    if n_classes < 2:
        raise DomainError(f"need at least 2 classes, got {n_classes}")
    if not 0 <= label < n_classes:
        raise DomainError(f"label {label} outside [0, {n_classes})")
    y = np.full(n_classes, -1.0 / (n_classes - 1))
    y[label] = 1.0
    return y


def class_vectors(labels, n_classes):
    """Stack of symmetric class vectors, shape (m, C)."""
    labels = np.asarray(labels, dtype=np.int64)
    if n_classes < 2:
        raise DomainError(f"need at least 2 classes, got {n_classes}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DomainError(f"labels must lie in [0, {n_classes})")
    Y = np.full((labels.size, n_classes), -1.0 / (n_classes - 1))
    Y[np.arange(labels.size), labels] = 1.0
    return Y


@dataclass(frozen=True, eq=False)
class Dataset:
    """m labeled observations of dimension n over C named classes.

    ``X`` and ``labels`` are stored read-only; ``meta`` records how the data
    was produced (generator name, parameters, seed) for audit trails.
    """

    X: np.ndarray
    labels: np.ndarray
    class_names: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        names = tuple(str(c) for c in self.class_names)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DomainError(f"features must be a non-empty (m, n) array, got shape {X.shape}")
        if labels.shape != (X.shape[0],):
            raise DomainError("one label per observation required")
        if len(names) < 2:
            raise DomainError("a dataset needs at least 2 classes")
        if len(set(names)) != len(names):
            raise DomainError("class names must be distinct")
        if labels.min() < 0 or labels.max() >= len(names):
            raise DomainError("label index outside class range")
        if not np.all(np.isfinite(X)):
            raise DomainError("features must be finite")
        X.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", names)

    @property
    def m(self):
        return self.X.shape[0]

    @property
    def n(self):
        return self.X.shape[1]

    @property
    def C(self):
        return len(self.class_names)

    @property
    def Y(self):
        return class_vectors(self.labels, self.C)

    def subset(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        return Dataset(self.X[ids], self.labels[ids], self.class_names, dict(self.meta))

    def fingerprint(self):
        """Stable content hash of features, labels and class names."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        h.update(json.dumps(list(self.class_names)).encode())
        return h.hexdigest()


def minmax_normalize(dataset, bounds=None):
    """Scale every feature to [0, 1]; constant features map to 0.

    ``bounds`` (a ``{"lo", "span"}`` dict recorded in a normalized set's
    meta) reapplies a training set's scaling to new data.
    """
    if bounds is None:
        lo = dataset.X.min(axis=0)
        span = dataset.X.max(axis=0) - lo
        span[span == 0] = 1.0
    else:
        lo = np.asarray(bounds["lo"], dtype=np.float64)
        span = np.asarray(bounds["span"], dtype=np.float64)
        if lo.shape != (dataset.n,) or span.shape != (dataset.n,):
            raise DomainError(f"normalization bounds do not match dimension {dataset.n}")
    meta = dict(dataset.meta, minmax={"lo": lo.tolist(), "span": span.tolist()})
    return Dataset((dataset.X - lo) / span, dataset.labels, dataset.class_names, meta)


DATA_FORMAT = "leveraged-knn-data"
DATA_VERSION = 1


def load_csv(path, label_column="label", class_names=None):
    """Read a header-first CSV; every non-label column is a feature.

    Leading ``#`` lines are skipped. Classes are the sorted distinct labels
    unless ``class_names`` fixes them (e.g. to a trained model's classes).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    skip = 0
    while skip < len(lines) and lines[skip].startswith("#"):
        skip += 1
    if skip and lines[0].startswith(f"# {DATA_FORMAT}") and lines[0] != f"# {DATA_FORMAT} v{DATA_VERSION}":
        raise FormatVersionError(DATA_FORMAT, f"v{DATA_VERSION}", lines[0])
    reader = csv.reader(lines[skip:])
    try:
        header = next(reader)
    except StopIteration:
        raise DataParseError("empty file", row=skip + 1) from None
    header = [h.strip() for h in header]
    if label_column not in header:
        raise DataParseError(f"label column {label_column!r} not in header", row=skip + 1)
    li = header.index(label_column)
    feature_cols = [c for i, c in enumerate(header) if i != li]
    if not feature_cols:
        raise DataParseError("no feature columns", row=skip + 1)
    rows, raw_labels = [], []
    for lineno, rec in enumerate(reader, start=skip + 2):
        if not rec or all(not cell.strip() for cell in rec):
            continue
        if len(rec) != len(header):
            raise DataParseError(f"expected {len(header)} cells, found {len(rec)}", row=lineno)
        feats = []
        for i, cell in enumerate(rec):
            if i == li:
                continue
            try:
                v = float(cell)
            except ValueError:
                raise DataParseError(f"cannot parse {cell!r}", lineno, header[i]) from None
            if not math.isfinite(v):
                raise DataParseError(f"non-finite value {cell!r}", lineno, header[i])
            feats.append(v)
        label = rec[li].strip()
        if not label:
            raise DataParseError("missing label", lineno, label_column)
        if class_names is not None and label not in class_names:
            raise DataParseError(f"unknown class {label!r}", lineno, label_column)
        rows.append(feats)
        raw_labels.append(label)
    if not rows:
        raise DataParseError("no data rows", row=skip + 2)
    names = sorted(set(raw_labels)) if class_names is None else list(class_names)
    if len(names) < 2:
        raise DomainError(f"need at least 2 distinct labels, found {names}")
    index = {name: c for c, name in enumerate(names)}
    labels = np.array([index[s] for s in raw_labels], dtype=np.int64)
    meta = {"source": str(path), "feature_columns": feature_cols}
    return Dataset(np.array(rows), labels, tuple(names), meta)


def save_csv(dataset, path, label_column="label", feature_names=None):
    """Write ``dataset`` in the format :func:`load_csv` reads."""
    if feature_names is None:
        feature_names = dataset.meta.get("feature_columns") or [
            f"x{i}" for i in range(dataset.n)
        ]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {DATA_FORMAT} v{DATA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(feature_names) + [label_column])
        for x, lab in zip(dataset.X, dataset.labels):
            w.writerow([repr(float(v)) for v in x] + [dataset.class_names[lab]])


def _ripley_sample(rng, m):
    # balanced: first class (N) gets the extra point when m is odd
    counts = {"N": (m + 1) // 2, "P": m // 2}
    X, labels = [], []
    sd = math.sqrt(RIPLEY_VARIANCE)
    for c, name in enumerate(("N", "P")):
        centers = np.array(RIPLEY_CENTERS[name])
        comp = rng.integers(0, 2, size=counts[name])
        X.append(centers[comp] + sd * rng.standard_normal((counts[name], 2)))
        labels.append(np.full(counts[name], c))
    X = np.vstack(X)
    labels = np.concatenate(labels)
    order = rng.permutation(m)
    return X[order], labels[order]


def gen_ripley(m_train=250, m_test=1000, seed=0):
    """Train/test draws from the two-class Ripley Gaussian mixture."""
    if m_train < 2 or m_test < 2:
        raise DomainError("Ripley sets need at least 2 points each")
    rng = np.random.default_rng(seed)
    meta = {
        "generator": "ripley",
        "m_train": m_train,
        "m_test": m_test,
        "seed": seed,
        "centers": {k: [list(c) for c in v] for k, v in RIPLEY_CENTERS.items()},
        "variance": RIPLEY_VARIANCE,
    }
    Xtr, ytr = _ripley_sample(rng, m_train)
    Xte, yte = _ripley_sample(rng, m_test)
    return (
        Dataset(Xtr, ytr, ("N", "P"), dict(meta, part="train")),
        Dataset(Xte, yte, ("N", "P"), dict(meta, part="test")),
    )


def ripley_bayes_predict(X):
    """Bayes-optimal labels (0 = N, 1 = P) under the Ripley mixture."""
    X = np.asarray(X, dtype=np.float64)

    def density(name):
        d = 0.0
        for cx, cy in RIPLEY_CENTERS[name]:
            d = d + np.exp(-((X[:, 0] - cx) ** 2 + (X[:, 1] - cy) ** 2) / (2 * RIPLEY_VARIANCE))
        return d

    return (density("P") > density("N")).astype(np.int64)


def blob_centers(n_classes, n_features):
    """Unit standard-basis centers, pushed outward once the basis is used up."""
    centers = np.zeros((n_classes, n_features))
    for c in range(n_classes):
        centers[c, c % n_features] = 1.0 + c // n_features
    return centers


def gen_blobs(n_classes, m_per_class, n_features, spread, seed=0):
    """Isotropic Gaussian clusters of standard deviation ``spread``."""
    if n_classes < 2 or n_features < 1 or m_per_class < 1:
        raise DomainError("need C >= 2, n >= 1 and at least one point per class")
    if not spread > 0:
        raise DomainError(f"spread must be positive, got {spread}")
    rng = np.random.default_rng(seed)
    centers = blob_centers(n_classes, n_features)
    labels = np.repeat(np.arange(n_classes), m_per_class)
    X = centers[labels] + spread * rng.standard_normal((labels.size, n_features))
    order = rng.permutation(labels.size)
    names = tuple(f"c{c}" for c in range(n_classes))
    meta = {
        "generator": "blobs",
        "n_classes": n_classes,
        "m_per_class": m_per_class,
        "n_features": n_features,
        "spread": spread,
        "seed": seed,
    }
    return Dataset(X[order], labels[order], names, meta)


def split_kfold(m, folds, seed=0):
    """Seeded partition of ``range(m)`` into ``folds`` near-equal test folds.

    Returns a list of ``(train_ids, test_ids)`` with sorted id arrays; each id
    lands in exactly one test fold and fold sizes differ by at most one.
    """
    if isinstance(m, Dataset):
        m = m.m
    if folds < 2:
        raise DomainError(f"need at least 2 folds, got {folds}")
    if folds > m:
        raise DomainError(f"cannot split {m} examples into {folds} folds")
    perm = np.random.default_rng(seed).permutation(m)
    parts = [np.sort(p) for p in np.array_split(perm, folds)]
    out = []
    for f, test in enumerate(parts):
        train = np.sort(np.concatenate([p for g, p in enumerate(parts) if g != f]))
        out.append((train, test))
    return out
