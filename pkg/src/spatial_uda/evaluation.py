"""Per-sample and aggregate scoring of predicted masks."""

import csv
import io
import math

import numpy as np

from .exceptions import InvalidInputError
from .metrics import METRIC_NAMES, evaluate_pair

__all__ = ["EVAL_COLUMNS", "score_masks", "aggregate", "eval_csv"]

EVAL_COLUMNS = ("sample_id", "domain_id") + tuple(METRIC_NAMES)


def score_masks(ids, domains, gts, preds, connectivity=8):
    """One row per sample; undefined metrics are ``None``."""
    if not (len(ids) == len(domains) == len(gts) == len(preds)):
        raise InvalidInputError("ids, domains, gts and preds must have equal length")
    rows = []
    for sid, dom, g, p in zip(ids, domains, gts, preds):
        if g is None:
            raise InvalidInputError(f"sample {sid} has no label; evaluation needs a labeled split")
        row = {"sample_id": sid, "domain_id": dom}
        row.update(evaluate_pair(np.asarray(g, np.uint8), np.asarray(p, np.uint8), connectivity=connectivity))
        rows.append(row)
    return rows


def aggregate(rows):
    """Mean of each metric over the samples where it is defined."""
    out = {"sample_id": "mean", "domain_id": ""}
    for name in METRIC_NAMES:
        values = [r[name] for r in rows if r[name] is not None]
        out[name] = float(np.mean(values)) if values else None
    return out


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def eval_csv(rows):
    """CSV text: per-sample rows followed by the aggregate row."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EVAL_COLUMNS)
    for row in list(rows) + [aggregate(rows)]:
        writer.writerow([_fmt(row[c]) for c in EVAL_COLUMNS])
    return buf.getvalue()
