"""Exact k-nearest-neighbor search and the direct/reciprocal neighbor graph.

Both backends rank candidates by the same squared-distance arithmetic and
break distance ties by ascending index, so their outputs are identical.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError, FormatVersionError

BACKENDS = ("exhaustive", "kdtree")
GRAPH_FORMAT = "leveraged-knn-graph"
GRAPH_VERSION = 1

# element budget for one (queries x points x dims) distance block
_BLOCK = 1 << 22


@dataclass(frozen=True)
class Metric:
    kind: str = "euclidean"

    def __post_init__(self):
        if self.kind != "euclidean":
            raise DomainError(f"unsupported metric {self.kind!r}")


EUCLIDEAN = Metric()


def sq_distances(Q, P):
    """Squared Euclidean distances, shape (len(Q), len(P)).

    Computed from explicit differences (not the dot-product expansion) so a
    given pair always yields the same float regardless of batch layout.
    """
    diff = Q[:, None, :] - P[None, :, :]
    return (diff * diff).sum(-1)


def _order(ids, d2):
    # ascending distance, ties by ascending id
    return ids[np.lexsort((ids, d2))]


def _select_rows(d2, kk):
    """k smallest per row of ``d2`` (inf marks excluded), tie-broken by column."""
    q, p = d2.shape
    if kk >= p:
        return np.argsort(d2, axis=1, kind="stable")[:, :kk]
    part = np.argpartition(d2, kk - 1, axis=1)[:, :kk]
    sub = np.take_along_axis(d2, part, axis=1)
    tau = sub.max(axis=1)
    n_le = (d2 <= tau[:, None]).sum(axis=1)
    out = np.take_along_axis(part, np.lexsort((part, sub), axis=1), axis=1)
    for r in np.flatnonzero(n_le > kk):
        cand = np.flatnonzero(d2[r] <= tau[r])
        out[r] = _order(cand, d2[r, cand])[:kk]
    return out


def _check_dims(Q, P):
    if Q.ndim != 2 or Q.shape[1] != P.shape[1]:
        raise DomainError(f"query dimension {Q.shape[-1]} does not match data dimension {P.shape[1]}")


def _exhaustive(Q, P, k, exclude):
    avail = P.shape[0] - (exclude is not None)
    kk = min(k, avail)
    if kk <= 0:
        return np.empty((Q.shape[0], 0), dtype=np.int64)
    step = max(1, _BLOCK // max(1, P.shape[0] * P.shape[1]))
    out = np.empty((Q.shape[0], kk), dtype=np.int64)
    for s in range(0, Q.shape[0], step):
        d2 = sq_distances(Q[s : s + step], P)
        if exclude is not None:
            ex = exclude[s : s + step]
            hit = ex >= 0
            d2[np.flatnonzero(hit), ex[hit]] = np.inf
        out[s : s + step] = _select_rows(d2, kk)
    return out


def _kdtree(Q, P, k, exclude, tree=None):
    avail = P.shape[0] - (exclude is not None)
    kk = min(k, avail)
    if kk <= 0:
        return np.empty((Q.shape[0], 0), dtype=np.int64)
    tree = tree if tree is not None else cKDTree(P)
    probe = min(P.shape[0], kk + (exclude is not None))
    dist, _ = tree.query(Q, k=probe)
    dist = np.asarray(dist).reshape(Q.shape[0], probe)
    # inflate the k-th radius so float disagreement can't drop a tied point
    radii = dist[:, -1] * (1 + 1e-9) + 1e-12
    out = np.empty((Q.shape[0], kk), dtype=np.int64)
    for r, cand in enumerate(tree.query_ball_point(Q, radii)):
        cand = np.asarray(cand, dtype=np.int64)
        if exclude is not None:
            cand = cand[cand != exclude[r]]
        d2 = sq_distances(Q[r : r + 1], P[cand])[0]
        out[r] = _order(cand, d2)[:kk]
    return out


def knn_batch(Q, P, k, metric=EUCLIDEAN, exclude=None, backend="exhaustive", threads=1):
    """k nearest rows of ``P`` for every row of ``Q``.

    ``exclude`` optionally gives, per query, one index of ``P`` to skip
    (negative entries skip nothing).
    Returns an int array of shape (len(Q), min(k, available)).
    """
    Metric(metric.kind if isinstance(metric, Metric) else metric)
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    P = np.asarray(P, dtype=np.float64)
    _check_dims(Q, P)
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if P.shape[0] == 0:
        raise DomainError("no points to search")
    if backend not in BACKENDS:
        raise DomainError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    if exclude is not None:
        exclude = np.asarray(exclude, dtype=np.int64).reshape(-1)
    tree = cKDTree(P) if backend == "kdtree" else None

    def run(sl):
        ex = None if exclude is None else exclude[sl]
        if backend == "kdtree":
            return _kdtree(Q[sl], P, k, ex, tree)
        return _exhaustive(Q[sl], P, k, ex)

    if threads <= 1 or Q.shape[0] < 2 * threads:
        return run(slice(None))
    bounds = np.linspace(0, Q.shape[0], threads + 1).astype(int)
    with ThreadPoolExecutor(threads) as pool:
        parts = list(pool.map(run, [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]))
    return np.vstack(parts)


def knn_search(query, data, k, metric=EUCLIDEAN, exclude_id=None, backend="exhaustive"):
    """Indices of the k nearest points of ``data`` to one query, nearest first."""
    P = data.X if hasattr(data, "X") else np.asarray(data, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64).reshape(1, -1)
    ex = None if exclude_id is None else [exclude_id]
    return knn_batch(q, P, k, metric, exclude=ex, backend=backend)[0]


@dataclass(frozen=True, eq=False)
class NeighborGraph:
    """Leave-self-out k-NN lists and their inverse (reciprocal) lists.

    ``direct[i]`` holds the neighbors of example i, nearest first.
    ``reciprocal[j]`` holds every i whose direct list contains j, ascending.
    """

    k: int
    direct: np.ndarray
    reciprocal: tuple
    metric: Metric = EUCLIDEAN

    @property
    def m(self):
        return self.direct.shape[0]

    def __eq__(self, other):
        if not isinstance(other, NeighborGraph):
            return NotImplemented
        return (
            self.k == other.k
            and self.metric == other.metric
            and np.array_equal(self.direct, other.direct)
            and len(self.reciprocal) == len(other.reciprocal)
            and all(np.array_equal(a, b) for a, b in zip(self.reciprocal, other.reciprocal))
        )


def invert(direct, m=None):
    """Reciprocal lists from direct lists."""
    m = direct.shape[0] if m is None else m
    rows = np.repeat(np.arange(direct.shape[0]), direct.shape[1])
    cols = direct.ravel()
    order = np.lexsort((rows, cols))
    rows, cols = rows[order], cols[order]
    splits = np.searchsorted(cols, np.arange(1, m))
    return tuple(np.split(rows, splits))


def graph_from_direct(direct, k, metric=EUCLIDEAN):
    direct = np.asarray(direct, dtype=np.int64)
    direct.flags.writeable = False
    return NeighborGraph(k, direct, invert(direct), metric)


def build_graph(dataset, k, metric=EUCLIDEAN, backend="exhaustive", threads=1):
    """Neighbor graph over ``dataset`` with each example excluded from its own list."""
    X = dataset.X if hasattr(dataset, "X") else np.asarray(dataset, dtype=np.float64)
    m = X.shape[0]
    if m < 2:
        raise DomainError("a neighbor graph needs at least 2 examples")
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if k >= m:
        warnings.warn(f"k={k} >= m={m}; clamping to k={m - 1}", stacklevel=2)
        k = m - 1
    direct = knn_batch(X, X, k, metric, exclude=np.arange(m), backend=backend, threads=threads)
    return graph_from_direct(direct, k, metric)


def edge_value(graph, Y, i, j, c):
    """Edge-matrix entry: y_ic * y_jc when j is a direct neighbor of i, else 0."""
    Y = Y.Y if hasattr(Y, "Y") else Y
    if j in graph.direct[i]:
        return float(Y[i, c] * Y[j, c])
    return 0.0


def save_graph(graph, dataset, path):
    doc = {
        "format": GRAPH_FORMAT,
        "version": GRAPH_VERSION,
        "dataset": dataset.fingerprint(),
        "k": graph.k,
        "metric": graph.metric.kind,
        "direct": graph.direct.tolist(),
    }
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_graph(path, dataset, k, metric=EUCLIDEAN):
    """Load a cached graph, checking it was built for this data, k and metric."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != GRAPH_FORMAT or doc.get("version") != GRAPH_VERSION:
        raise FormatVersionError(GRAPH_FORMAT, GRAPH_VERSION, doc.get("version"))
    key = (doc.get("dataset"), doc.get("k"), doc.get("metric"))
    want = (dataset.fingerprint(), min(k, dataset.m - 1), metric.kind)
    if key != want:
        raise DomainError(f"graph cache key {key} does not match {want}")
    return graph_from_direct(np.array(doc["direct"], dtype=np.int64), doc["k"], metric)
