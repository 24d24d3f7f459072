"""Model files and CSV reports.

Model file layout::

    RCDT-NS-1\\n
    <one line of JSON: n_classes, dim, per-class d and rank, n_q, n_theta,
     shape, labels, config>\\n
    for each class: its d singular values, then the dim x d basis
    (row-major), all big-endian float64.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .._validation import ParseError
from ..classifier import ClassifierConfig, SubspaceModel

MODEL_MAGIC = b"RCDT-NS-1\n"
_BE = ">f8"


def save_models(path, models, cfg: ClassifierConfig, shape) -> None:
    if not models:
        raise ValueError("nothing to save")
    dim = models[0].dim
    n_q = dim // cfg.n_theta
    header = {"n_classes": len(models), "dim": dim, "d": [m.d for m in models],
              "rank": [int(m.rank) for m in models], "n_q": n_q,
              "n_theta": cfg.n_theta, "shape": [int(s) for s in shape],
              "labels": [int(m.class_label) for m in models], "config": cfg.to_dict()}
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(json.dumps(header, sort_keys=True).encode() + b"\n")
    for m in models:
        buf.write(np.asarray(m.singular_values, dtype=_BE).tobytes())
        buf.write(np.ascontiguousarray(m.basis, dtype=_BE).tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_models(path):
    """Read a model file; returns ``(models, config, image_shape)``."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MODEL_MAGIC):
        raise ParseError(f"{path}: not an RCDT-NS-1 model file", 0)
    pos = len(MODEL_MAGIC)
    end = raw.find(b"\n", pos)
    if end < 0:
        raise ParseError(f"{path}: unterminated header", pos)
    try:
        header = json.loads(raw[pos:end])
        n, dim = int(header["n_classes"]), int(header["dim"])
        dims = [int(v) for v in header["d"]]
        ranks = [int(v) for v in header["rank"]]
        labels = [int(v) for v in header["labels"]]
        cfg = ClassifierConfig.from_dict(header["config"])
        shape = tuple(int(s) for s in header["shape"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"{path}: bad header ({exc})", pos) from None
    if not (len(labels) == len(dims) == len(ranks) == n) or int(header["n_q"]) * cfg.n_theta != dim:
        raise ParseError(f"{path}: inconsistent header dimensions", pos)
    pos = end + 1
    expected = sum(8 * (d + dim * d) for d in dims)
    if len(raw) - pos != expected:
        raise ParseError(f"{path}: expected {expected} payload bytes, found {len(raw) - pos}",
                         min(len(raw), pos + expected))
    models = []
    for k, d in enumerate(dims):
        s = np.frombuffer(raw, _BE, d, pos).astype(float)
        B = np.frombuffer(raw, _BE, dim * d, pos + 8 * d).astype(float).reshape(dim, d)
        models.append(SubspaceModel(labels[k], B, s, ranks[k]))
        pos += 8 * (d + dim * d)
    return models, cfg, shape


REPORT_COLUMNS = ("method", "split", "n_train_per_class", "repeat", "seed",
                  "n_test", "n_correct", "accuracy", "confusion")


def fmt(x: float) -> str:
    return "%.9g" % x


def _csv_text(header, rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return out.getvalue()


def report_csv(rows) -> str:
    """CSV text for report rows (dicts); confusion matrices flattened as ``a b;c d``."""
    body = []
    for r in rows:
        conf = ";".join(" ".join(str(int(v)) for v in line) for line in r["confusion"])
        body.append([r["method"], r["split"], r["n_train_per_class"], r["repeat"], r["seed"],
                     r["n_test"], r["n_correct"], fmt(r["accuracy"]), conf])
    return _csv_text(REPORT_COLUMNS, body)


def confusion_csv(matrix, labels) -> str:
    header = ["true\\pred"] + [str(int(v)) for v in labels]
    body = [[str(int(lab))] + [int(v) for v in line] for lab, line in zip(labels, matrix)]
    return _csv_text(header, body)


def summary_csv(summary) -> str:
    cols = ("method", "split", "n_train_per_class", "n_repeats", "mean_accuracy", "std", "sem")
    body = [[s["method"], s["split"], s["n_train_per_class"], s["n_repeats"],
             fmt(s["mean"]), fmt(s["std"]), fmt(s["sem"])] for s in summary]
    return _csv_text(cols, body)


def read_report(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in ("n_train_per_class", "repeat", "seed", "n_test", "n_correct"):
            r[k] = int(r[k])
        r["accuracy"] = float(r["accuracy"])
        r["confusion"] = [[int(v) for v in line.split()] for line in r["confusion"].split(";")]
    return rows
