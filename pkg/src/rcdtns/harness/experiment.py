"""Accuracy-vs-training-size and out-of-distribution experiment runners."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .._validation import ConfigError
from ..classifier import ClassifierConfig, predict_maps, train_from_maps
from ..data import LabeledDataset, builtin_templates, deform_dataset, load_idx, synth_affine_dataset
from ..transforms import rcdt_batch
from . import io as hio
from .config import ExperimentConfig, IdxSpec, SyntheticSpec
from .knn import knn_predict

log = logging.getLogger(__name__)

PROPOSED = "rcdt_ns"
ABLATION = "rcdt_ns_noaffine"
KNN = "knn"

TRAIN_STREAM, TEST_STREAM = 0, 1
_SUBSAMPLE_TAG = 101


@dataclass
class Report:
    rows: list
    labels: list
    timings: list = field(default_factory=list)

    def to_csv(self) -> str:
        return hio.report_csv(self.rows)

    def summary(self) -> list[dict]:
        return summarize(self.rows)

    def accuracy(self, method, n_train, split="test") -> np.ndarray:
        return np.array([r["accuracy"] for r in self.rows
                         if r["method"] == method and r["split"] == split
                         and r["n_train_per_class"] == n_train])

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(self.to_csv())
        (out / "summary.csv").write_text(hio.summary_csv(self.summary()))
        splits = sorted({r["split"] for r in self.rows})
        totals = {}
        for r in self.rows:
            key = (r["method"], r["n_train_per_class"], r["split"])
            totals[key] = totals.get(key, 0) + np.asarray(r["confusion"])
        for (method, size, split), mat in sorted(totals.items()):
            suffix = "" if splits == ["test"] else f"_{split}"
            (out / f"confusion_{method}_{size}{suffix}.csv").write_text(
                hio.confusion_csv(mat, self.labels))
        # wall time is kept apart so report.csv stays byte-stable
        timing = "method,n_train_per_class,repeat,wall_time_s\n" + "".join(
            f"{m},{n},{r},{t:.3f}\n" for m, n, r, t in self.timings)
        (out / "timing.csv").write_text(timing)
        return out / "report.csv"


def summarize(rows) -> list[dict]:
    groups = {}
    for r in rows:
        groups.setdefault((r["method"], r["split"], r["n_train_per_class"]), []).append(r["accuracy"])
    out = []
    for (method, split, size), acc in groups.items():
        acc = np.asarray(acc)
        std = float(acc.std(ddof=1)) if acc.size > 1 else 0.0
        out.append({"method": method, "split": split, "n_train_per_class": size,
                    "n_repeats": int(acc.size), "mean": float(acc.mean()), "std": std,
                    "sem": std / math.sqrt(acc.size)})
    return out


def trend_non_decreasing(summary, method, split="test") -> bool:
    """Mean accuracy never drops by more than the standard error of the difference."""
    pts = sorted((s["n_train_per_class"], s["mean"], s["sem"]) for s in summary
                 if s["method"] == method and s["split"] == split)
    return all(m1 >= m0 - math.hypot(e0, e1) for (_, m0, e0), (_, m1, e1) in zip(pts, pts[1:]))


# --------------------------------------------------------------------------
# data preparation
# --------------------------------------------------------------------------

@dataclass
class Prepared:
    pool: LabeledDataset
    tests: dict
    pool_maps: np.ndarray
    test_maps: dict
    labels: list


def _take(ds: LabeledDataset, limit):
    return ds if limit is None or limit >= len(ds) else ds.subset(np.arange(limit))


def _load_idx(spec: IdxSpec):
    train = _take(load_idx(spec.train_images, spec.train_labels), spec.train_limit)
    test = _take(load_idx(spec.test_images, spec.test_labels), spec.test_limit)
    if train.shape != test.shape:
        raise ConfigError(f"train images are {train.shape}, test images {test.shape}")
    return train, test


def prepare(cfg: ExperimentConfig, ood: bool = False) -> Prepared:
    """Build the training pool and test splits, plus their R-CDT maps."""
    ds = cfg.dataset
    seed = cfg.seed
    if ood and cfg.ood is None:
        raise ConfigError("config has no ood section")
    if isinstance(ds, SyntheticSpec):
        templates = builtin_templates(ds.n_classes, ds.shape)
        train_ranges = cfg.ood.inner if ood else ds.train_ranges
        pool = synth_affine_dataset(templates, train_ranges, ds.train_pool_per_class, seed,
                                    stream=TRAIN_STREAM)
        if ood:
            tests = {
                "in": synth_affine_dataset(templates, cfg.ood.inner, ds.test_per_class, seed,
                                           stream=TEST_STREAM),
                "out": synth_affine_dataset(templates, cfg.ood.outer, ds.test_per_class, seed,
                                            exclude=cfg.ood.inner, stream=TEST_STREAM),
            }
        else:
            tests = {"test": synth_affine_dataset(templates, ds.test_deformation, ds.test_per_class,
                                                  seed, stream=TEST_STREAM)}
    else:
        train, test = _load_idx(ds)
        if ood:
            pool = deform_dataset(train, cfg.ood.inner, seed, stream=TRAIN_STREAM)
            tests = {"in": deform_dataset(test, cfg.ood.inner, seed, stream=TEST_STREAM),
                     "out": deform_dataset(test, cfg.ood.outer, seed, exclude=cfg.ood.inner,
                                           stream=TEST_STREAM)}
        else:
            pool, tests = train, {"test": test}

    n_theta = cfg.classifier.n_theta
    labels = sorted(set(pool.labels.tolist()) | {v for t in tests.values() for v in t.labels.tolist()})
    return Prepared(pool, tests, rcdt_batch(pool.images, n_theta),
                    {k: rcdt_batch(t.images, n_theta) for k, t in tests.items()}, labels)


def subsample(labels, n_per_class: int, seed: int, repeat: int) -> np.ndarray:
    """Seeded stratified choice of ``n_per_class`` indices per class, sorted."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(np.random.SeedSequence([seed, _SUBSAMPLE_TAG, n_per_class, repeat]))
    picks = []
    for lab in np.unique(labels):
        idx = np.flatnonzero(labels == lab)
        if n_per_class > idx.size:
            raise ConfigError(f"train size {n_per_class} exceeds the {idx.size} samples of class {lab}")
        picks.append(np.sort(rng.choice(idx, n_per_class, replace=False)))
    return np.concatenate(picks)


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------

def methods_for(cfg: ExperimentConfig) -> list[tuple[str, ClassifierConfig | None]]:
    out = [(PROPOSED, cfg.classifier)]
    if cfg.baselines.ablation:
        out.append((ABLATION, replace(cfg.classifier, use_affine_set=False)))
    if cfg.baselines.knn:
        out.append((KNN, None))
    return out


def confusion_matrix(y_true, y_pred, labels) -> np.ndarray:
    pos = {lab: i for i, lab in enumerate(labels)}
    mat = np.zeros((len(labels), len(labels)), dtype=int)
    for t, p in zip(y_true, y_pred):
        mat[pos[int(t)], pos[int(p)]] += 1
    return mat


def _fit_predict(method, ccfg, k, prep: Prepared, idx):
    train_labels = prep.pool.labels[idx]
    if method == KNN:
        X = prep.pool.images[idx]
        return {s: knn_predict(X, train_labels, t.images, k) for s, t in prep.tests.items()}
    classes = sorted(set(train_labels.tolist()))
    maps = prep.pool_maps[idx]
    models = train_from_maps([maps[train_labels == c] for c in classes], ccfg, classes)
    return {s: predict_maps(m, models, ccfg) for s, m in prep.test_maps.items()}


def _run_unit(cfg: ExperimentConfig, prep: Prepared, n_train: int, repeat: int):
    idx = subsample(prep.pool.labels, n_train, cfg.seed, repeat)
    rows, timings = [], []
    for method, ccfg in methods_for(cfg):
        t0 = time.perf_counter()
        preds = _fit_predict(method, ccfg, cfg.baselines.k, prep, idx)
        timings.append((method, n_train, repeat, time.perf_counter() - t0))
        for split, pred in preds.items():
            truth = prep.tests[split].labels
            conf = confusion_matrix(truth, pred, prep.labels)
            n_correct = int(np.trace(conf))
            rows.append({"method": method, "split": split, "n_train_per_class": n_train,
                         "repeat": repeat, "seed": cfg.seed, "n_test": int(conf.sum()),
                         "n_correct": n_correct, "accuracy": n_correct / int(conf.sum()),
                         "confusion": conf.tolist()})
    return rows, timings


def _run(cfg: ExperimentConfig, ood: bool, jobs: int) -> Report:
    prep = prepare(cfg, ood)
    units = [(n, r) for n in cfg.train_sizes for r in range(cfg.n_repeats)]
    # validate sizes before fanning out
    for n in cfg.train_sizes:
        subsample(prep.pool.labels, n, cfg.seed, 0)
    if jobs == 1:
        results = [_run_unit(cfg, prep, n, r) for n, r in units]
    else:
        # Parallel returns results in submission order
        results = Parallel(n_jobs=jobs)(delayed(_run_unit)(cfg, prep, n, r) for n, r in units)
    rows, timings = [], []
    for unit_rows, unit_times in results:
        rows += unit_rows
        timings += unit_times
    for s in summarize(rows):
        log.info("%s %s n=%d: mean accuracy %.4f", s["method"], s["split"],
                 s["n_train_per_class"], s["mean"])
    return Report(rows, prep.labels, timings)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> Report:
    """Train on seeded stratified subsets for every size and repeat; test on the full test split."""
    return _run(cfg, False, jobs)


def run_ood_experiment(cfg: ExperimentConfig, jobs: int = 1) -> Report:
    """Train on inner deformations; test on inner ("in") and outer-minus-inner ("out") splits."""
    return _run(cfg, True, jobs)


def ood_drop(report: Report, method: str, n_train: int) -> float:
    return float(report.accuracy(method, n_train, "in").mean()
                 - report.accuracy(method, n_train, "out").mean())
