"""Uniform and leveraged k-NN voting, and prototype filtering."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import class_vectors
from .errors import DomainError
from .neighbors import knn_batch
from .unn import LeveragedModel


@dataclass(frozen=True)
class Prediction:
    """Scores and argmax labels for a batch of queries.

    ``neighbors`` holds prototype ids (original training ids for a model),
    ``contributions[q, r, c]`` the vote of the r-th neighbor for class c.
    """

    scores: np.ndarray
    labels: np.ndarray
    neighbors: np.ndarray | None = None
    contributions: np.ndarray | None = None

    @property
    def ties(self):
        """Queries whose top score is shared by several classes."""
        top = self.scores.max(axis=-1, keepdims=True)
        return (self.scores == top).sum(axis=-1) > 1


def _argmax(scores):
    # np.argmax returns the first maximum: lowest class index wins ties
    return np.argmax(scores, axis=-1)


def _vote_sum(contrib):
    # summing in sorted order makes equal multisets of votes give equal
    # scores exactly, so ties between classes survive rounding
    return np.sort(contrib, axis=1).sum(axis=1)


def predict_classic(Q, prototypes, k, metric=None, backend="exhaustive", threads=1):
    """Majority vote among the k nearest prototypes."""
    kw = {} if metric is None else {"metric": metric}
    nbrs = knn_batch(Q, prototypes.X, k, backend=backend, threads=threads, **kw)
    votes = (prototypes.Y > 0).astype(np.float64)
    scores = votes[nbrs].sum(axis=1)
    return Prediction(scores, _argmax(scores), nbrs)


def predict_leveraged(Q, model, contributions=False, backend="exhaustive", threads=1):
    """Leveraged vote sum_j alpha_jc y_jc over the k nearest retained prototypes."""
    protos = model.prototypes
    if protos.m == 0:
        raise DomainError("model has no retained prototypes")
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    lever = model.alpha * protos.Y
    if model.class_pools is None:
        nbrs = knn_batch(Q, protos.X, model.k, model.metric, backend=backend, threads=threads)
        contrib = lever[nbrs]
        scores = _vote_sum(contrib)
        ids = model.ids[nbrs]
    else:
        scores = np.zeros((Q.shape[0], protos.C))
        ids = None
        contrib = None
        for c in range(protos.C):
            pool = np.flatnonzero(model.class_pools[:, c])
            if pool.size == 0:
                continue
            nb = pool[knn_batch(Q, protos.X[pool], model.k, model.metric, backend=backend, threads=threads)]
            scores[:, c] = _vote_sum(lever[nb, c])
    return Prediction(scores, _argmax(scores), ids, contrib if contributions else None)


def score_classic(query, prototypes, k, metric=None):
    p = predict_classic(np.reshape(query, (1, -1)), prototypes, k, metric)
    return Prediction(p.scores[0], p.labels[0], p.neighbors[0])


def score_leveraged(query, model, contributions=False):
    p = predict_leveraged(np.reshape(query, (1, -1)), model, contributions)
    return Prediction(
        p.scores[0], p.labels[0],
        None if p.neighbors is None else p.neighbors[0],
        None if p.contributions is None else p.contributions[0],
    )


@dataclass(frozen=True)
class FilterSpec:
    """Either keep prototypes with some alpha_jc above ``alpha_tilde``
    (threshold mode) or the top ``theta`` fraction by squared row norm of
    alpha (fraction mode)."""

    mode: str
    alpha_tilde: float | None = None
    theta: float | None = None
    per_class: bool = False
    exclude_nonpositive: bool = False

    def __post_init__(self):
        if self.mode == "threshold":
            if self.alpha_tilde is None or self.theta is not None:
                raise DomainError("threshold mode takes alpha_tilde only")
            if self.alpha_tilde < 0:
                raise DomainError("alpha_tilde must be >= 0")
        elif self.mode == "fraction":
            if self.theta is None or self.alpha_tilde is not None:
                raise DomainError("fraction mode takes theta only")
            if not 0 < self.theta <= 1:
                raise DomainError(f"theta must lie in (0, 1], got {self.theta}")
        else:
            raise DomainError(f"unknown filter mode {self.mode!r}")

    @classmethod
    def fraction(cls, theta, **kw):
        return cls("fraction", theta=theta, **kw)

    @classmethod
    def threshold(cls, alpha_tilde, **kw):
        return cls("threshold", alpha_tilde=alpha_tilde, **kw)


def n_retained(theta, m):
    """ceil(theta * m), robust to float error in the product."""
    return max(1, math.ceil(theta * m - 1e-9))


def _fraction_keep(alpha, theta, exclude_nonpositive):
    sq = np.sum(alpha * alpha, axis=1)
    eligible = sq > 0
    if exclude_nonpositive:
        eligible &= alpha.max(axis=1) > 0
    cand = np.flatnonzero(eligible)
    # largest norm first, ties by ascending index
    cand = cand[np.lexsort((cand, -sq[cand]))]
    return np.sort(cand[: n_retained(theta, alpha.shape[0])])


def filter_model(model, spec):
    """Model restricted to the prototypes ``spec`` retains (alpha rows unchanged)."""
    alpha = model.alpha
    if spec.per_class:
        if spec.mode == "threshold":
            pools = alpha > spec.alpha_tilde
        else:
            pools = np.zeros(alpha.shape, bool)
            for c in range(alpha.shape[1]):
                col = alpha[:, c]
                nz = np.flatnonzero(col != 0 if not spec.exclude_nonpositive else col > 0)
                nz = nz[np.lexsort((nz, -np.abs(col[nz])))]
                pools[nz[: n_retained(spec.theta, alpha.shape[0])], c] = True
        keep = np.flatnonzero(pools.any(axis=1))
        if keep.size == 0:
            raise DomainError(f"filter {spec} retains no prototypes")
        return LeveragedModel(
            model.prototypes.subset(keep), alpha[keep], model.k, model.loss, model.metric,
            model.ids[keep], pools[keep],
        )
    if spec.mode == "threshold":
        keep = np.flatnonzero(alpha.max(axis=1) > spec.alpha_tilde)
    else:
        keep = _fraction_keep(alpha, spec.theta, spec.exclude_nonpositive)
    if keep.size == 0:
        raise DomainError(f"filter {spec} retains no prototypes")
    return LeveragedModel(
        model.prototypes.subset(keep), alpha[keep], model.k, model.loss, model.metric, model.ids[keep]
    )


def random_subsample(prototypes, theta, seed=0):
    """Uniform random ``theta`` fraction of the prototypes (cost-matched baseline)."""
    m = prototypes.m
    n = n_retained(theta, m)
    ids = np.sort(np.random.default_rng(seed).choice(m, size=n, replace=False))
    return prototypes.subset(ids), ids


__all__ = [
    "FilterSpec", "Prediction", "class_vectors", "filter_model", "n_retained",
    "predict_classic", "predict_leveraged", "random_subsample", "score_classic",
    "score_leveraged",
]
