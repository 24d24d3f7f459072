"""JSON experiment configuration (schema version 1).

A config file fully determines an experiment::

    {
      "schema_version": 1,
      "seed": 0,
      "dataset": {"kind": "synthetic", "n_classes": 10, "shape": [64, 64],
                  "train_pool_per_class": 8, "test_per_class": 200,
                  "train_deformation": {...}, "test_deformation": {...}},
      "train_sizes": [1, 2, 4, 8],
      "n_repeats": 5,
      "classifier": {"variance_fraction": 0.99, "rotation_search": true},
      "baselines": {"knn": true, "k": 1, "ablation": true},
      "ood": {"inner": {...}, "outer": {...}}
    }

An ``idx`` dataset names four files instead (``train_images``,
``train_labels``, ``test_images``, ``test_labels``) plus optional
``train_limit`` / ``test_limit``. Relative paths resolve against the config
file's directory. Deformation blocks use the :class:`DeformationRange` field
names.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .._validation import ConfigError, ValidationError
from ..classifier import ClassifierConfig
from ..data import DeformationRange, TEMPLATE_NAMES

SCHEMA_VERSION = 1

_TOP_KEYS = {"schema_version", "seed", "dataset", "train_sizes", "n_repeats",
             "classifier", "baselines", "ood", "description"}


@dataclass(frozen=True)
class SyntheticSpec:
    n_classes: int = 10
    shape: tuple = (64, 64)
    train_pool_per_class: int = 8
    test_per_class: int = 200
    train_deformation: DeformationRange | None = None
    test_deformation: DeformationRange = field(default_factory=DeformationRange)

    kind = "synthetic"

    @property
    def train_ranges(self) -> DeformationRange:
        return self.train_deformation if self.train_deformation is not None else self.test_deformation


@dataclass(frozen=True)
class IdxSpec:
    train_images: Path
    train_labels: Path
    test_images: Path
    test_labels: Path
    train_limit: int | None = None
    test_limit: int | None = None

    kind = "idx"


@dataclass(frozen=True)
class BaselineSpec:
    knn: bool = True
    k: int = 1
    ablation: bool = True


@dataclass(frozen=True)
class OodSpec:
    inner: DeformationRange
    outer: DeformationRange


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: SyntheticSpec | IdxSpec
    train_sizes: tuple = (1,)
    n_repeats: int = 1
    seed: int = 0
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    baselines: BaselineSpec = field(default_factory=BaselineSpec)
    ood: OodSpec | None = None

    def __post_init__(self):
        sizes = tuple(self.train_sizes)
        if not sizes or any(isinstance(s, bool) or not isinstance(s, int) or s < 1 for s in sizes):
            raise ConfigError("train_sizes must be a nonempty list of positive integers")
        if isinstance(self.n_repeats, bool) or not isinstance(self.n_repeats, int) or self.n_repeats < 1:
            raise ConfigError("n_repeats must be a positive integer")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        if self.baselines.k < 1:
            raise ConfigError("baselines.k must be at least 1")
        ds = self.dataset
        if isinstance(ds, SyntheticSpec) and max(sizes) > ds.train_pool_per_class:
            raise ConfigError(f"train size {max(sizes)} exceeds train_pool_per_class "
                              f"{ds.train_pool_per_class}")
        if self.ood is not None and not self.ood.outer.contains(self.ood.inner):
            raise ConfigError("ood inner ranges must lie inside the outer ranges "
                              "(partially overlapping intervals are ambiguous)")
        object.__setattr__(self, "train_sizes", sizes)

    def with_overrides(self, seed: int | None = None, n_theta: int | None = None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if n_theta is not None:
            cfg = replace(cfg, classifier=_classifier(dict(cfg.classifier.to_dict(), n_theta=int(n_theta))))
        return cfg

    def to_dict(self) -> dict:
        ds = self.dataset
        if isinstance(ds, SyntheticSpec):
            dset = {"kind": "synthetic", "n_classes": ds.n_classes, "shape": list(ds.shape),
                    "train_pool_per_class": ds.train_pool_per_class,
                    "test_per_class": ds.test_per_class,
                    "train_deformation": ds.train_deformation.to_dict() if ds.train_deformation else None,
                    "test_deformation": ds.test_deformation.to_dict()}
        else:
            dset = {"kind": "idx", "train_images": str(ds.train_images),
                    "train_labels": str(ds.train_labels), "test_images": str(ds.test_images),
                    "test_labels": str(ds.test_labels), "train_limit": ds.train_limit,
                    "test_limit": ds.test_limit}
        out = {"schema_version": SCHEMA_VERSION, "seed": self.seed, "dataset": dset,
               "train_sizes": list(self.train_sizes), "n_repeats": self.n_repeats,
               "classifier": self.classifier.to_dict(),
               "baselines": {"knn": self.baselines.knn, "k": self.baselines.k,
                             "ablation": self.baselines.ablation}}
        if self.ood is not None:
            out["ood"] = {"inner": self.ood.inner.to_dict(), "outer": self.ood.outer.to_dict()}
        return out


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _deformation(d, where) -> DeformationRange:
    try:
        return DeformationRange.from_dict(d)
    except (TypeError, ValidationError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _classifier(d) -> ClassifierConfig:
    try:
        return ClassifierConfig.from_dict(d)
    except (TypeError, ValidationError) as exc:
        raise ConfigError(f"classifier: {exc}") from None


def _positive_int(v, where, optional=False):
    if v is None and optional:
        return None
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ConfigError(f"{where} must be a positive integer")
    return v


def _dataset(d, base: Path):
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError("dataset must be an object with a 'kind'")
    kind = d["kind"]
    if kind == "synthetic":
        _check_keys(d, {"kind", "n_classes", "shape", "train_pool_per_class", "test_per_class",
                        "train_deformation", "test_deformation"}, "dataset")
        n_classes = _positive_int(d.get("n_classes", 10), "dataset.n_classes")
        if n_classes > len(TEMPLATE_NAMES):
            raise ConfigError(f"at most {len(TEMPLATE_NAMES)} synthetic classes are available")
        shape = d.get("shape", [64, 64])
        if not (isinstance(shape, list) and len(shape) == 2):
            raise ConfigError("dataset.shape must be [H, W]")
        shape = tuple(_positive_int(s, "dataset.shape") for s in shape)
        train_def = d.get("train_deformation")
        return SyntheticSpec(
            n_classes=n_classes, shape=shape,
            train_pool_per_class=_positive_int(d.get("train_pool_per_class", 8),
                                               "dataset.train_pool_per_class"),
            test_per_class=_positive_int(d.get("test_per_class", 200), "dataset.test_per_class"),
            train_deformation=None if train_def is None else _deformation(train_def, "train_deformation"),
            test_deformation=_deformation(d.get("test_deformation", {}), "test_deformation"))
    if kind == "idx":
        paths = ("train_images", "train_labels", "test_images", "test_labels")
        _check_keys(d, {"kind", *paths, "train_limit", "test_limit"}, "dataset")
        missing = [p for p in paths if p not in d]
        if missing:
            raise ConfigError(f"idx dataset is missing {missing}")
        resolved = {p: (base / d[p]) if not Path(d[p]).is_absolute() else Path(d[p]) for p in paths}
        return IdxSpec(**resolved,
                       train_limit=_positive_int(d.get("train_limit"), "train_limit", True),
                       test_limit=_positive_int(d.get("test_limit"), "test_limit", True))
    raise ConfigError(f"unknown dataset kind {kind!r}")


def config_from_dict(d: dict, base_dir=".") -> ExperimentConfig:
    _check_keys(d, _TOP_KEYS, "config")
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    if "dataset" not in d:
        raise ConfigError("config has no dataset")
    base = Path(base_dir)

    bl = d.get("baselines", {})
    _check_keys(bl, {"knn", "k", "ablation"}, "baselines")
    baselines = BaselineSpec(knn=bool(bl.get("knn", True)),
                             k=_positive_int(bl.get("k", 1), "baselines.k"),
                             ablation=bool(bl.get("ablation", True)))
    ood = None
    if d.get("ood") is not None:
        _check_keys(d["ood"], {"inner", "outer"}, "ood")
        if "inner" not in d["ood"] or "outer" not in d["ood"]:
            raise ConfigError("ood needs both 'inner' and 'outer'")
        ood = OodSpec(_deformation(d["ood"]["inner"], "ood.inner"),
                      _deformation(d["ood"]["outer"], "ood.outer"))
    sizes = d.get("train_sizes", [1])
    if not isinstance(sizes, list):
        raise ConfigError("train_sizes must be a list")
    return ExperimentConfig(
        dataset=_dataset(d["dataset"], base),
        train_sizes=tuple(sizes),
        n_repeats=d.get("n_repeats", 1),
        seed=d.get("seed", 0),
        classifier=_classifier(d.get("classifier", {})),
        baselines=baselines,
        ood=ood,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(raw, path.parent)
