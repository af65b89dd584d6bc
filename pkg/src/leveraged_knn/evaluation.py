"""Risks, confusion matrices, cross-validation and margin statistics.

"mAP" here is the scene-categorization convention: the mean over classes
of the per-class classification rate (confusion-matrix diagonal divided by
row sum), not ranked-retrieval average precision.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .classify import (
    FilterSpec,
    filter_model,
    predict_classic,
    predict_leveraged,
    random_subsample,
)
from .errors import DomainError
from .neighbors import build_graph, knn_batch
from .unn import TrainConfig, surrogate_risk, train


def edges(scores, Y):
    """y_ic * h_c(o_i) for every example and class."""
    Y = Y.Y if hasattr(Y, "Y") else Y
    return Y * np.asarray(scores)


def empirical_risk(scores, Y):
    """Fraction of (example, class) pairs with a strictly negative edge."""
    return float(np.mean(edges(scores, Y) < 0))


def confusion_matrix(true, pred, n_classes):
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(true), np.asarray(pred)), 1)
    return cm


def per_class_rates(cm):
    rows = cm.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(rows > 0, np.diag(cm) / np.where(rows > 0, rows, 1), np.nan)


def mean_per_class_accuracy(cm):
    rates = per_class_rates(cm)
    return float(np.nanmean(rates))


@dataclass
class EvalReport:
    mode: str
    confusion: list
    per_class_rate: list
    mAP: float
    error_rate: float
    empirical_risk: float
    n_queries: int
    n_prototypes: int
    ties: int
    surrogate_risk: float | None = None

    def to_dict(self):
        return asdict(self)


def _report(mode, pred, test_set, n_prototypes, surrogate=None):
    cm = confusion_matrix(test_set.labels, pred.labels, test_set.C)
    rates = per_class_rates(cm)
    return EvalReport(
        mode=mode,
        confusion=cm.tolist(),
        per_class_rate=[None if np.isnan(r) else float(r) for r in rates],
        mAP=mean_per_class_accuracy(cm),
        error_rate=float(np.mean(pred.labels != test_set.labels)),
        empirical_risk=empirical_risk(pred.scores, test_set),
        n_queries=int(test_set.m),
        n_prototypes=int(n_prototypes),
        ties=int(pred.ties.sum()),
        surrogate_risk=surrogate,
    )


def evaluate(model, test_set, mode="leveraged", k=None, backend="exhaustive", threads=1, graph=None):
    """Score ``test_set`` with the leveraged rule or plain k-NN over the model's prototypes.

    ``graph`` (the training graph) adds the training surrogate to the report.
    """
    if test_set.m == 0:
        raise DomainError("empty test set")
    if test_set.n != model.n or test_set.class_names != model.class_names:
        raise DomainError("test set is incompatible with the model (dimension or classes differ)")
    if mode == "leveraged":
        pred = predict_leveraged(test_set.X, model, backend=backend, threads=threads)
    elif mode == "classic":
        pred = predict_classic(test_set.X, model.prototypes, k or model.k, backend=backend, threads=threads)
    else:
        raise DomainError(f"unknown mode {mode!r}; choose classic or leveraged")
    surr = None
    if graph is not None and mode == "leveraged":
        surr = surrogate_risk(model.alpha, graph, model.prototypes, model.loss)
    return _report(mode, pred, test_set, model.m, surr)


def evaluate_prototypes(prototypes, test_set, k, backend="exhaustive", threads=1):
    """Plain k-NN report for a bare prototype set."""
    pred = predict_classic(test_set.X, prototypes, k, backend=backend, threads=threads)
    return _report("classic", pred, test_set, prototypes.m)


@dataclass
class CVReport:
    folds: list = field(default_factory=list)

    def _mean(self, key, sub):
        return float(np.mean([f[sub][key] for f in self.folds]))

    @property
    def summary(self):
        return {
            "folds": len(self.folds),
            "unn_mAP": self._mean("mAP", "unn"),
            "unn_error": self._mean("error_rate", "unn"),
            "knn_mAP": self._mean("mAP", "knn"),
            "knn_error": self._mean("error_rate", "knn"),
            "knn_sampled_mAP": self._mean("mAP", "knn_sampled"),
            "knn_sampled_error": self._mean("error_rate", "knn_sampled"),
            "theta": float(np.mean([f["theta"] for f in self.folds])),
        }

    def to_dict(self):
        return {"summary": self.summary, "folds": self.folds}


def cross_validate(dataset, folds=3, config=None, filter_spec=None, seed=0, backend="exhaustive"):
    """Train on one fold and test on the union of the others, for every fold.

    Each fold reports UNN (filtered by ``filter_spec``), plain k-NN on the
    whole training fold, and plain k-NN on a random sample of the training
    fold the same size as the retained UNN prototype set.
    """
    from .dataset import split_kfold

    cfg = config or TrainConfig()
    spec = filter_spec if filter_spec is not None else FilterSpec.threshold(0.0)
    report = CVReport()
    for f, (rest, fold) in enumerate(split_kfold(dataset.m, folds, seed)):
        train_set, test_set = dataset.subset(fold), dataset.subset(rest)
        graph = build_graph(train_set, cfg.k, backend=backend, threads=cfg.threads)
        model, diag = train(train_set, graph, cfg)
        filtered = filter_model(model, spec)
        theta = filtered.m / train_set.m
        sampled, _ = random_subsample(train_set, theta, seed=seed * 1000 + f)
        report.folds.append({
            "fold": f,
            "train_size": int(train_set.m),
            "test_size": int(test_set.m),
            "theta": theta,
            "train_surrogate": diag.total_surrogate(),
            "unn": evaluate(filtered, test_set, "leveraged", backend=backend).to_dict(),
            "knn": evaluate_prototypes(train_set, test_set, cfg.k, backend=backend).to_dict(),
            "knn_sampled": evaluate_prototypes(sampled, test_set, cfg.k, backend=backend).to_dict(),
        })
    return report


def model_edges(model, dataset, exclude_self=True):
    """Leveraged edges of ``dataset`` examples under ``model``, shape (m, C).

    With ``exclude_self``, an example never votes for itself: dataset index i
    is matched against prototype id i.
    """
    exclude = None
    if exclude_self:
        pos = {int(pid): p for p, pid in enumerate(model.ids)}
        exclude = np.array([pos.get(i, -1) for i in range(dataset.m)], dtype=np.int64)
    nbrs = knn_batch(dataset.X, model.prototypes.X, model.k, model.metric, exclude=exclude)
    votes = (model.alpha * model.prototypes.Y)[nbrs].sum(axis=1)
    return dataset.Y * votes


def _summary(x):
    if x.size == 0:
        return {"min": None, "q25": None, "median": None, "q75": None, "mean": None}
    q = np.quantile(x, [0.25, 0.5, 0.75])
    return {"min": float(x.min()), "q25": float(q[0]), "median": float(q[1]),
            "q75": float(q[2]), "mean": float(x.mean())}


def margin_stats(model, dataset, exclude_self=True):
    """Distribution of normalized edges per class.

    Edges of class c are divided by sum_j |alpha_jc| (the L1 mass of the
    class's coefficients), so values lie in [-1, 1].
    """
    e = model_edges(model, dataset, exclude_self)
    mass = np.abs(model.alpha).sum(axis=0)
    norm = np.where(mass > 0, e / np.where(mass > 0, mass, 1.0), 0.0)
    out = {"per_class": [], "min_positive_margin": None}
    for c in range(dataset.C):
        out["per_class"].append(dict(_summary(norm[:, c]), class_name=dataset.class_names[c]))
    pos = norm[norm > 0]
    out["min_positive_margin"] = float(pos.min()) if pos.size else None
    out["normalized_edges"] = norm
    return out

