"""Versioned files: models, diagnostics, predictions and reports.

JSON floats are written with Python's shortest round-trip repr, so a model
survives save/load bit-exactly. CSV outputs start with a ``# <format> v<N>``
line that readers check before parsing.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .errors import DataParseError, FormatVersionError
from .losses import Loss
from .neighbors import Metric
from .unn import DIAG_COLUMNS, LeveragedModel

MODEL_FORMAT = "leveraged-knn-model"
MODEL_VERSION = 1
DIAG_FORMAT = "leveraged-knn-diagnostics"
PRED_FORMAT = "leveraged-knn-predictions"
CONTRIB_FORMAT = "leveraged-knn-contributions"
REPORT_FORMAT = "leveraged-knn-report"
CSV_VERSION = 1
REPORT_VERSION = 1


def model_to_dict(model):
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "k": model.k,
        "C": model.C,
        "n": model.n,
        "metric": model.metric.kind,
        "loss": model.loss.value,
        "class_names": list(model.class_names),
        "ids": model.ids.tolist(),
        "features": model.prototypes.X.tolist(),
        "labels": model.prototypes.labels.tolist(),
        "alpha": model.alpha.tolist(),
    }
    if "minmax" in model.prototypes.meta:
        doc["minmax"] = model.prototypes.meta["minmax"]
    if model.class_pools is not None:
        doc["class_pools"] = model.class_pools.astype(int).tolist()
    return doc


def model_from_dict(doc):
    if doc.get("format") != MODEL_FORMAT:
        raise FormatVersionError("model file", MODEL_FORMAT, doc.get("format"))
    if doc.get("version") != MODEL_VERSION:
        raise FormatVersionError("model file", MODEL_VERSION, doc.get("version"))
    C, n = doc["C"], doc["n"]
    X = np.array(doc["features"], dtype=np.float64).reshape(-1, n)
    alpha = np.array(doc["alpha"], dtype=np.float64).reshape(-1, C)
    meta = {"minmax": doc["minmax"]} if "minmax" in doc else {}
    protos = Dataset(X, doc["labels"], tuple(doc["class_names"]), meta)
    pools = doc.get("class_pools")
    return LeveragedModel(
        protos, alpha, doc["k"], Loss.parse(doc["loss"]), Metric(doc["metric"]),
        doc["ids"], None if pools is None else np.array(pools, dtype=bool),
    )


def save_model(model, path):
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n", encoding="utf-8")


def load_model(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataParseError(f"model file is not valid JSON: {exc.msg}", row=exc.lineno) from None
    return model_from_dict(doc)


def _fmt(x):
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def write_table(path, fmt, header, rows):
    """CSV with a `# <fmt> v<N>` first line."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {fmt} v{CSV_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_table(path, fmt):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        first = fh.readline().strip()
        want = f"# {fmt} v{CSV_VERSION}"
        if first != want:
            raise FormatVersionError(fmt, want, first)
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


def save_diagnostics(diagnostics, path):
    write_table(path, DIAG_FORMAT, DIAG_COLUMNS, diagnostics.rows())


def load_diagnostics(path):
    """Rows of a diagnostics CSV as dicts of floats (NaN for empty cells)."""
    header, rows = read_table(path, DIAG_FORMAT)
    if tuple(header) != DIAG_COLUMNS:
        raise DataParseError(f"unexpected diagnostics header {header}", row=2)
    out = []
    for row in rows:
        out.append({h: (float(v) if v != "" else math.nan) for h, v in zip(header, row)})
    return out


def save_predictions(pred, class_names, path, query_ids=None):
    q = pred.scores.shape[0]
    ids = range(q) if query_ids is None else query_ids
    header = ["query_id", "predicted"] + [f"score_{c}" for c in class_names]
    rows = (
        [int(i), class_names[int(lab)]] + [float(s) for s in sc]
        for i, lab, sc in zip(ids, pred.labels, pred.scores)
    )
    write_table(path, PRED_FORMAT, header, rows)


def load_predictions(path):
    header, rows = read_table(path, PRED_FORMAT)
    return header, rows


def save_contributions(pred, model, path):
    """One row per (query, neighbor, class): the neighbor's leveraged vote."""
    header = ["query_id", "neighbor_id", "neighbor_class", "class", "contribution"]
    pos = {int(pid): p for p, pid in enumerate(model.ids)}
    names = model.class_names
    labels = model.prototypes.labels

    def rows():
        for qi in range(pred.contributions.shape[0]):
            for r, nid in enumerate(pred.neighbors[qi]):
                owner = names[int(labels[pos[int(nid)]])]
                for c in range(model.C):
                    yield [qi, int(nid), owner, names[c], float(pred.contributions[qi, r, c])]

    write_table(path, CONTRIB_FORMAT, header, rows())


def save_report(report, path, kind):
    doc = {"format": REPORT_FORMAT, "version": REPORT_VERSION, "kind": kind, "report": report}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_report(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != REPORT_FORMAT or doc.get("version") != REPORT_VERSION:
        raise FormatVersionError("report", REPORT_VERSION, doc.get("version"))
    return doc


def text_table(header, rows, floatfmt="{:.4f}"):
    """Aligned plain-text table."""
    cells = [[floatfmt.format(v) if isinstance(v, float) else str(v) for v in row] for row in rows]
    widths = [max(len(str(h)), *(len(r[i]) for r in cells)) if cells else len(str(h))
              for i, h in enumerate(header)]
    lines = ["  ".join(str(h).rjust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    return "\n".join(lines)
