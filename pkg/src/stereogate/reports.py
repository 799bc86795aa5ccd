"""Plain-text report writers: JSON documents and comma-delimited tables.

Floats are written with ``repr`` (shortest exact round-trip) and nothing
time-dependent goes into a report, so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from pathlib import Path

import numpy as np


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, enum.Enum):
        return v.value
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, float) and not np.isfinite(v):
        return None
    return v


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, enum.Enum):
        return v.value
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def json_text(doc):
    return json.dumps(_jsonable(doc), indent=2, allow_nan=False) + "\n"


def table_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_json(path, doc):
    Path(path).write_text(json_text(doc))


def write_table(path, header, rows):
    Path(path).write_text(table_text(header, rows))


# document builders -----------------------------------------------------------


def metric_dict(m):
    return m.as_dict()


def kfold_documents(summary, dataset_name=None):
    doc = {
        "protocol": summary.protocol,
        "seed": summary.seed,
        "n_folds": len(summary.folds),
        "summary": summary.summary(),
    }
    if dataset_name:
        doc["dataset"] = dataset_name
    fold_header = ["repeat", "fold", "split", "n", "mse", "mae", "r2", "r2_pearson"]
    fold_rows = []
    for f in summary.folds:
        for split in ("train", "test"):
            m = getattr(f, split)
            fold_rows.append([f.repeat, f.fold, split, m.n, m.mse, m.mae, m.r2, m.r2_pearson])
    return doc, (fold_header, fold_rows)


def gate_rows(results):
    header = ["reaction_type", "n", "choice", "mean_imine_log_density",
              "mean_nucleophile_log_density", "mae_composite", "mae_lasso",
              "mae_nucleophile_rf", "mae_overall_rf"]
    rows = [
        [r.reaction_type, r.n, r.choice, r.imine_log_density, r.nucleophile_log_density,
         r.mae["COMPOSITE"], r.mae["LASSO"], r.mae["NUCLEOPHILE_RF"], r.mae["OVERALL_RF"]]
        for r in results
    ]
    return header, rows


def scatter_rows(results):
    header = ["reaction_type", "measured", "predicted"]
    rows = [
        [r.reaction_type, t, p]
        for r in results
        for t, p in zip(r.y_true, r.y_pred)
    ]
    return header, rows
