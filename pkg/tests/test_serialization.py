import json
import math

import numpy as np
import pytest

from leveraged_knn import DataParseError, FormatVersionError, TrainConfig, train
from leveraged_knn.classify import FilterSpec, filter_model, predict_leveraged
from leveraged_knn.dataset import minmax_normalize
from leveraged_knn.serialization import (
    load_diagnostics,
    load_model,
    load_predictions,
    load_report,
    model_from_dict,
    model_to_dict,
    save_contributions,
    save_diagnostics,
    save_model,
    save_predictions,
    save_report,
    text_table,
)
from leveraged_knn.unn import DIAG_COLUMNS


@pytest.fixture(scope="module")
def trained(ripley, ripley_graph):
    return train(ripley[0], ripley_graph, TrainConfig(T=300))


def test_model_round_trip_is_bit_exact(tmp_path, trained):
    model, _ = trained
    for m in (model, filter_model(model, FilterSpec.fraction(0.25)),
              filter_model(model, FilterSpec.threshold(0.0, per_class=True))):
        save_model(m, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        assert np.array_equal(back.alpha, m.alpha) and np.array_equal(back.ids, m.ids)
        assert np.array_equal(back.prototypes.X, m.prototypes.X)
        assert back.prototypes.fingerprint() == m.prototypes.fingerprint()
        assert (back.k, back.loss, back.metric) == (m.k, m.loss, m.metric)
        assert (back.class_pools is None) == (m.class_pools is None)
        if m.class_pools is not None:
            assert np.array_equal(back.class_pools, m.class_pools)


def test_model_keeps_normalization(ripley, ripley_graph, tmp_path):
    tr = minmax_normalize(ripley[0])
    model, _ = train(tr, ripley_graph, TrainConfig(T=10))
    save_model(model, tmp_path / "m.json")
    assert load_model(tmp_path / "m.json").prototypes.meta["minmax"] == tr.meta["minmax"]


def test_model_version_mismatch(tmp_path, trained):
    doc = model_to_dict(trained[0])
    doc["version"] = 2
    with pytest.raises(FormatVersionError, match="expected version 1"):
        model_from_dict(doc)
    doc["version"], doc["format"] = 1, "something-else"
    with pytest.raises(FormatVersionError):
        model_from_dict(doc)
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(DataParseError):
        load_model(tmp_path / "bad.json")


def test_diagnostics_round_trip(tmp_path, trained):
    _, diag = trained
    save_diagnostics(diag, tmp_path / "d.csv")
    first = (tmp_path / "d.csv").read_text().splitlines()[:2]
    assert first[0] == "# leveraged-knn-diagnostics v1" and first[1] == ",".join(DIAG_COLUMNS)
    rows = load_diagnostics(tmp_path / "d.csv")
    assert len(rows) == sum(tr.iterations for tr in diag.traces)
    for row, ref in zip(rows, diag.rows()):
        for key, v in zip(DIAG_COLUMNS, ref):
            assert (math.isnan(v) and math.isnan(row[key])) or row[key] == v


def test_diagnostics_version_check(tmp_path, trained):
    save_diagnostics(trained[1], tmp_path / "d.csv")
    text = (tmp_path / "d.csv").read_text().replace("v1", "v7", 1)
    (tmp_path / "d.csv").write_text(text)
    with pytest.raises(FormatVersionError):
        load_diagnostics(tmp_path / "d.csv")


def test_predictions_and_contributions(tmp_path, trained, ripley):
    model, _ = trained
    te = ripley[1].subset(np.arange(20))
    pred = predict_leveraged(te.X, model, contributions=True)
    save_predictions(pred, model.class_names, tmp_path / "p.csv")
    header, rows = load_predictions(tmp_path / "p.csv")
    assert header == ["query_id", "predicted", "score_N", "score_P"] and len(rows) == 20
    assert [r[1] for r in rows] == [model.class_names[c] for c in pred.labels]
    assert np.array_equal(np.array([[float(x) for x in r[2:]] for r in rows]), pred.scores)
    save_contributions(pred, model, tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "# leveraged-knn-contributions v1"
    assert len(lines) == 2 + 20 * model.k * model.C


def test_report_round_trip(tmp_path):
    save_report({"mAP": 0.5}, tmp_path / "r.json", "eval")
    doc = load_report(tmp_path / "r.json")
    assert doc["report"] == {"mAP": 0.5} and doc["kind"] == "eval"
    raw = json.loads((tmp_path / "r.json").read_text())
    raw["version"] = 3
    (tmp_path / "r.json").write_text(json.dumps(raw))
    with pytest.raises(FormatVersionError):
        load_report(tmp_path / "r.json")


def test_text_table_alignment():
    out = text_table(["a", "long"], [[1, 0.5], [22, 0.25]]).splitlines()
    assert len({len(line) for line in out}) == 1
    assert out[2].split() == ["1", "0.5000"]
