"""Command line entry point.

Exit status: 0 on success, 2 for configuration or input-format errors, 1 for
any other failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ._validation import ConfigError, ParseError, ValidationError
from .classifier import ClassifierConfig, predict_maps, train
from .data import (builtin_templates, load_idx, normalize_image, read_idx_images,
                   read_idx_labels, synth_affine_dataset, write_idx_images, write_idx_labels)
from .harness import io as hio
from .harness.config import ExperimentConfig, SyntheticSpec, load_config
from .harness.experiment import run_experiment, run_ood_experiment
from .transforms import rcdt_batch, rcdt_forward

log = logging.getLogger("rcdtns")


class UsageError(Exception):
    pass


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--angles", type=int, help="number of projection angles (default 45)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers (default 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    g = _global_flags()
    parser = argparse.ArgumentParser(prog="rcdtns", description="R-CDT nearest-subspace classifier")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[g], help="write a synthetic dataset as IDX files")
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--per-class", type=int, default=None, help="test instances per class")

    p = sub.add_parser("transform", parents=[g], help="dump the R-CDT of one image")
    p.add_argument("images", help="IDX image file")
    p.add_argument("--index", type=int, default=0)

    p = sub.add_parser("train", parents=[g], help="fit class subspaces and save a model file")
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--model", help="model file name (default <out>/model.rcdtns)")

    p = sub.add_parser("classify", parents=[g], help="label images with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--labels", help="optional true labels; accuracy goes to stderr")

    sub.add_parser("experiment", parents=[g], help="accuracy vs training size")
    sub.add_parser("ood", parents=[g], help="out-of-distribution experiment")
    return parser


def _out_dir(args, required=False) -> Path | None:
    if args.out is None:
        if required:
            raise UsageError("--out is required for this command")
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _experiment_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required")
    return load_config(args.config).with_overrides(args.seed, args.angles)


def _classifier_config(args) -> ClassifierConfig:
    cfg = ClassifierConfig()
    if args.config:
        raw = _read_json(args.config)
        cfg = ClassifierConfig.from_dict(raw.get("classifier", raw))
    if args.angles is not None:
        cfg = replace(cfg, n_theta=args.angles)
    return cfg


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def cmd_synth(args) -> int:
    out = _out_dir(args, required=True)
    if args.config:
        cfg = _experiment_config(args)
        if not isinstance(cfg.dataset, SyntheticSpec):
            raise ConfigError("synth needs a synthetic dataset config")
        spec, seed = cfg.dataset, cfg.seed
    else:
        spec, seed = SyntheticSpec(), args.seed or 0
    n_classes = args.classes or spec.n_classes
    per_class = args.per_class or spec.test_per_class
    templates = builtin_templates(n_classes, spec.shape)
    splits = {"train": (spec.train_ranges, spec.train_pool_per_class, 0),
              "test": (spec.test_deformation, per_class, 1)}
    for name, (ranges, n, stream) in splits.items():
        ds = synth_affine_dataset(templates, ranges, n, seed, stream=stream)
        write_idx_images(out / f"{name}-images.idx", ds.images)
        write_idx_labels(out / f"{name}-labels.idx", ds.labels)
        log.info("wrote %d %s images", len(ds), name)
    return 0


def _load_unlabeled(path):
    raw = read_idx_images(path)
    return np.stack([normalize_image(im / 255.0) for im in raw])


def cmd_transform(args) -> int:
    raw = read_idx_images(args.images)
    if not 0 <= args.index < raw.shape[0]:
        raise UsageError(f"--index {args.index} out of range (file has {raw.shape[0]} images)")
    m = rcdt_forward(normalize_image(raw[args.index] / 255.0), args.angles or 45)
    lines = [f"{m.shape[0]} {m.shape[1]}"]
    lines += [" ".join("%.9g" % v for v in row) for row in m]
    text = "\n".join(lines) + "\n"
    out = _out_dir(args)
    if out is None:
        sys.stdout.write(text)
    else:
        (out / f"rcdt_{args.index}.txt").write_text(text)
    return 0


def cmd_train(args) -> int:
    cfg = _classifier_config(args)
    ds = load_idx(args.images, args.labels)
    groups = {int(c): ds.images[ds.labels == c] for c in np.unique(ds.labels)}
    models = train(groups, cfg)
    if args.model:
        path = Path(args.model)
    else:
        path = _out_dir(args, required=True) / "model.rcdtns"
    hio.save_models(path, models, cfg, ds.shape)
    log.info("saved %d class subspaces (d=%d) to %s", len(models), models[0].d, path)
    return 0


def cmd_classify(args) -> int:
    models, cfg, shape = hio.load_models(args.model)
    images = _load_unlabeled(args.images)
    if images.shape[1:] != tuple(shape):
        raise ValidationError(f"model expects {tuple(shape)} images, got {images.shape[1:]}")
    pred = predict_maps(rcdt_batch(images, cfg.n_theta), models, cfg)
    text = "index,label\n" + "".join(f"{i},{p}\n" for i, p in enumerate(pred))
    out = _out_dir(args)
    if out is None:
        sys.stdout.write(text)
    else:
        (out / "predictions.csv").write_text(text)
    if args.labels:
        truth = read_idx_labels(args.labels)
        if truth.shape[0] != pred.shape[0]:
            raise ParseError("label count does not match image count", 4)
        print(f"accuracy {np.mean(truth == pred):.4f}", file=sys.stderr)
    return 0


def _cmd_run(args, runner) -> int:
    cfg = _experiment_config(args)
    out = _out_dir(args, required=True)
    report = runner(cfg, jobs=args.jobs)
    report.write(out)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    for s in report.summary():
        print(f"{s['method']:<18} {s['split']:<5} n={s['n_train_per_class']:<3} "
              f"acc={s['mean']:.4f} +/- {s['sem']:.4f}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "transform": cmd_transform,
    "train": cmd_train,
    "classify": cmd_classify,
    "experiment": lambda a: _cmd_run(a, run_experiment),
    "ood": lambda a: _cmd_run(a, run_ood_experiment),
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("rcdtns: error: --jobs must be positive", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ParseError, ValidationError, UsageError, FileNotFoundError) as exc:
        print(f"rcdtns: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and signal runtime failure
        log.debug("failure", exc_info=True)
        print(f"rcdtns: runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
