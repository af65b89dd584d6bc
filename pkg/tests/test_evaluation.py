import numpy as np
import pytest

from leveraged_knn import DomainError, TrainConfig, build_graph, gen_blobs, train
from leveraged_knn.classify import FilterSpec, filter_model, predict_leveraged
from leveraged_knn.dataset import ripley_bayes_predict, split_kfold
from leveraged_knn.evaluation import (
    confusion_matrix,
    cross_validate,
    empirical_risk,
    evaluate,
    evaluate_prototypes,
    margin_stats,
    mean_per_class_accuracy,
    model_edges,
    per_class_rates,
)
from leveraged_knn.unn import LeveragedModel, leveraged_edges

from helpers import make_dataset


def test_empirical_risk_examples():
    Y = np.array([[1.0, -1.0], [-1.0, 1.0]])
    assert empirical_risk(Y * 2, Y) == 0.0
    assert empirical_risk(-Y, Y) == 1.0
    Y4 = np.array([[1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, 1.0]])
    scores = Y4.copy()
    scores[0] = [-1.0, 1.0]  # one example wrong on both classes
    assert empirical_risk(scores, Y4) == 0.25


def test_risk_matches_argmax_errors_two_class():
    # for C = 2 both membership pairs of an example are wrong together
    rng = np.random.default_rng(0)
    for _ in range(50):
        labels = rng.integers(0, 2, 40)
        Y = np.where(np.eye(2)[labels] > 0, 1.0, -1.0)
        s = rng.normal(size=40)
        scores = np.column_stack([s, -s])
        errors = np.mean(np.where(s > 0, 0, 1) != labels)
        assert empirical_risk(scores, Y) == pytest.approx(errors)


def test_confusion_and_map():
    true = np.array([0, 0, 1, 1, 2, 2])
    cm = confusion_matrix(true, true, 3)
    assert np.array_equal(cm, 2 * np.eye(3, dtype=int)) and mean_per_class_accuracy(cm) == 1.0
    cm = confusion_matrix(true, np.zeros(6, int), 3)
    assert cm.sum() == 6 and mean_per_class_accuracy(cm) == pytest.approx(1 / 3)
    # mAP is the unweighted mean of diagonal rates, not pooled accuracy
    cm = confusion_matrix([0, 0, 0, 1], [0, 0, 0, 0], 2)
    assert per_class_rates(cm).tolist() == [1.0, 0.0] and mean_per_class_accuracy(cm) == 0.5


def test_bayes_rule_on_ripley_test(ripley):
    te = ripley[1]
    err = np.mean(ripley_bayes_predict(te.X) != te.labels)
    assert abs(err - 0.08) <= 0.02


def test_evaluate_report_fields(ripley, ripley_graph):
    model, _ = train(ripley[0], ripley_graph, TrainConfig())
    a = evaluate(model, ripley[1], "classic", k=11).to_dict()
    b = evaluate(model, ripley[1], "leveraged", graph=ripley_graph).to_dict()
    assert a.keys() == b.keys()
    assert sum(map(sum, a["confusion"])) == 1000 == sum(map(sum, b["confusion"]))
    assert b["surrogate_risk"] is not None and a["surrogate_risk"] is None
    assert 1 - a["mAP"] <= 0.2 and 1 - b["mAP"] <= 0.2
    with pytest.raises(DomainError):
        evaluate(model, ripley[1], "other")
    with pytest.raises(DomainError):
        evaluate(model, make_dataset([[0.0, 0.0, 0.0]], [0], 2), "classic")


def test_cv_fold_sizes_and_determinism():
    ds = gen_blobs(8, 20, 4, 0.4, seed=0)
    r1 = cross_validate(ds, 3, TrainConfig(k=5), seed=1)
    r2 = cross_validate(ds, 3, TrainConfig(k=5), seed=1)
    assert r1.to_dict() == r2.to_dict()
    assert [f["train_size"] for f in r1.folds] == [54, 53, 53]
    assert [f["test_size"] for f in r1.folds] == [106, 107, 107]
    assert r1.summary["folds"] == 3


def test_cv_protocol_sizes_for_gist_layout():
    parts = split_kfold(2688, 3, seed=0)
    assert all(len(te) == 896 and len(tr) == 1792 for tr, te in parts)


def test_cv_knn_baseline_is_plain_knn():
    ds = gen_blobs(3, 20, 2, 0.6, seed=4)
    rep = cross_validate(ds, 3, TrainConfig(k=5), FilterSpec.fraction(1.0), seed=2)
    for f, (rest, fold) in zip(rep.folds, split_kfold(ds.m, 3, 2)):
        want = evaluate_prototypes(ds.subset(fold), ds.subset(rest), 5).to_dict()
        assert f["knn"] == want
        if f["theta"] == 1.0:
            assert f["knn_sampled"] == want


def test_cv_separable_blobs_are_perfect():
    ds = gen_blobs(4, 15, 4, 0.01, seed=0)
    s = cross_validate(ds, 3, TrainConfig(k=3)).summary
    assert s["unn_mAP"] == 1.0 and s["knn_mAP"] == 1.0


def test_model_edges_match_training_edges(ripley, ripley_graph):
    model, _ = train(ripley[0], ripley_graph, TrainConfig())
    assert np.allclose(model_edges(model, ripley[0]), leveraged_edges(model.alpha, ripley_graph, ripley[0]))


def test_margins_zero_alpha_and_separable():
    protos = make_dataset([[0.0], [1.0], [2.0]], [0, 1, 0])
    zero = LeveragedModel(protos, np.zeros((3, 2)), 1)
    assert np.all(model_edges(zero, protos) == 0)
    ds = gen_blobs(2, 15, 2, 0.01, seed=0)
    model, _ = train(ds, build_graph(ds, 3), TrainConfig(k=3))
    e = model_edges(model, ds)
    assert e[ds.labels == 0, 0].min() > 0 and e[ds.labels == 1, 1].min() > 0
    ms = margin_stats(model, ds)
    assert np.all(np.abs(ms["normalized_edges"]) <= 1 + 1e-12)


def test_filtering_does_not_shrink_min_margin(ripley, ripley_graph):
    model, _ = train(ripley[0], ripley_graph, TrainConfig())
    kept = filter_model(model, FilterSpec.fraction(0.25))
    te = ripley[1]

    def min_correct_margin(mdl):
        scores = predict_leveraged(te.X, mdl).scores
        e = te.Y * scores / np.abs(mdl.alpha).sum(axis=0)
        return e[e > 0].min()

    assert min_correct_margin(kept) >= min_correct_margin(model)
