"""Nearest-subspace classification in R-CDT space."""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict, fields

import numpy as np

from ._validation import ValidationError, check_image_stack
from .invariance import rotation_stack, spanning_affine, spanning_translation
from .transforms import DEFAULT_N_THETA, rcdt_batch

RANK_FLOOR = 1e-10


@dataclass(frozen=True)
class ClassifierConfig:
    variance_fraction: float = 0.99
    use_translation_set: bool = True
    use_affine_set: bool = True
    rotation_search: bool = True
    rotation_stride: int = 1
    rotation_max: float = math.pi
    n_theta: int = DEFAULT_N_THETA

    def __post_init__(self):
        if not 0 < self.variance_fraction <= 1:
            raise ValidationError("variance_fraction must lie in (0, 1]")
        if int(self.rotation_stride) < 1:
            raise ValidationError("rotation_stride must be positive")
        if not 0 <= self.rotation_max <= math.pi:
            raise ValidationError("rotation_max must lie in [0, pi]")
        if int(self.n_theta) < 2:
            raise ValidationError("n_theta must be at least 2")

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown classifier keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SubspaceModel:
    class_label: int
    basis: np.ndarray
    singular_values: np.ndarray
    rank: int | None = None  # numerical rank before truncation

    def __post_init__(self):
        if self.rank is None:
            object.__setattr__(self, "rank", self.basis.shape[1])

    @property
    def d(self) -> int:
        return self.basis.shape[1]

    @property
    def dim(self) -> int:
        return self.basis.shape[0]


def _flip_signs(U: np.ndarray) -> np.ndarray:
    # deterministic orientation: largest-magnitude entry of each column positive
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1
    return U * signs


def enriched_matrix(maps: np.ndarray, cfg: ClassifierConfig) -> np.ndarray:
    """Columns: the vectorized maps, then affine elements, then translation elements."""
    maps = np.asarray(maps, dtype=float)
    cols = [maps.reshape(maps.shape[0], -1).T]
    if cfg.use_affine_set:
        cols.append(spanning_affine(list(maps)).matrix())
    if cfg.use_translation_set:
        cols.append(spanning_translation(maps.shape[1:]).matrix())
    return np.concatenate(cols, axis=1)


def variance_dimension(singular_values, fraction: float) -> int:
    """Smallest d whose leading squared singular values reach ``fraction`` of the total."""
    s2 = np.asarray(singular_values, dtype=float) ** 2
    total = s2.sum()
    if total <= 0:
        return 0
    ratio = np.cumsum(s2) / total
    return int(min(np.searchsorted(ratio, fraction - 1e-12, side="left") + 1, s2.size))


def _orthogonalize(M: np.ndarray):
    # unit-norm columns so the variance rule does not depend on map units
    norms = np.linalg.norm(M, axis=0)
    M = M[:, norms > 0] / norms[norms > 0]
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    keep = s > RANK_FLOOR * s[0] if s.size and s[0] > 0 else np.zeros(s.shape, bool)
    return _flip_signs(U[:, keep]), s[keep]


def train_from_maps(class_maps, cfg: ClassifierConfig, labels=None) -> list[SubspaceModel]:
    """Build one enriched subspace per class from precomputed R-CDT maps.

    ``class_maps`` is a sequence of ``(n_k, N_q, N_theta)`` arrays.
    """
    class_maps = [np.asarray(m, dtype=float) for m in class_maps]
    if not class_maps:
        raise ValidationError("no classes given")
    labels = list(range(len(class_maps))) if labels is None else list(labels)
    grid = None
    bases = []
    for k, maps in enumerate(class_maps):
        if maps.ndim != 3 or maps.shape[0] == 0:
            raise ValidationError(f"class {labels[k]} has no samples")
        if grid is None:
            grid = maps.shape[1:]
        elif maps.shape[1:] != grid:
            raise ValidationError("all samples must share one map grid")
        bases.append(_orthogonalize(enriched_matrix(maps, cfg)))

    d = max(variance_dimension(s, cfg.variance_fraction) for _, s in bases)
    # classes whose rank is below d keep their full rank
    return [SubspaceModel(lab, U[:, :d].copy(), s[:d].copy(), U.shape[1])
            for lab, (U, s) in zip(labels, bases)]


def _group_by_class(class_samples):
    if isinstance(class_samples, dict):
        labels = sorted(class_samples)
        groups = [class_samples[k] for k in labels]
    else:
        groups = list(class_samples)
        labels = list(range(len(groups)))
    return labels, groups


def train(class_samples, cfg: ClassifierConfig = ClassifierConfig()) -> list[SubspaceModel]:
    """Train per-class subspaces from images.

    ``class_samples`` is either a list of per-class image lists (labels are
    their positions) or a mapping from label to image list.
    """
    labels, groups = _group_by_class(class_samples)
    shape = None
    class_maps = []
    for lab, imgs in zip(labels, groups):
        if len(imgs) == 0:
            raise ValidationError(f"class {lab} has no samples")
        stack = check_image_stack(np.asarray(imgs, dtype=float))
        if shape is None:
            shape = stack.shape[1:]
        elif stack.shape[1:] != shape:
            raise ValidationError(f"image shape {stack.shape[1:]} differs from {shape}")
        class_maps.append(rcdt_batch(stack, cfg.n_theta))
    return train_from_maps(class_maps, cfg, labels)


def distance_to_subspace(x, model: SubspaceModel) -> float:
    """Squared residual ``||x - B B^T x||^2``."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != model.dim:
        raise ValidationError(f"vector has {x.size} entries, model expects {model.dim}")
    B = model.basis
    r = x - B @ (B.T @ x)
    return float(r @ r)


def _check_models(models) -> int:
    if not models:
        raise ValidationError("no trained models")
    if len({m.dim for m in models}) != 1:
        raise ValidationError("models were trained on different map grids")
    # a class may sit below the shared d only when its rank caps it there
    d = max(m.d for m in models)
    if any(m.d != d and m.d != m.rank for m in models):
        raise ValidationError("models have unequal subspace dimensions")
    return models[0].dim


def candidate_maps(m, cfg: ClassifierConfig) -> np.ndarray:
    """Rotated copies of a map searched at test time (just ``m`` without search)."""
    m = np.asarray(m, dtype=float)
    if not cfg.rotation_search:
        return m[None]
    maps, _ = rotation_stack(m, cfg.rotation_stride, cfg.rotation_max)
    return maps


def class_distances(m, models, cfg: ClassifierConfig) -> np.ndarray:
    """Minimum squared distance over searched rotations, one entry per model."""
    dim = _check_models(models)
    X = candidate_maps(m, cfg).reshape(-1, dim)
    sq = np.einsum("ij,ij->i", X, X)
    out = np.empty(len(models))
    for k, model in enumerate(models):
        P = X @ model.basis
        out[k] = max(0.0, float(np.min(sq - np.einsum("ij,ij->i", P, P))))
    return out


def batch_distances(maps, models, cfg: ClassifierConfig, chunk: int = 64) -> np.ndarray:
    """:func:`class_distances` for a stack of maps, shape ``(n, n_classes)``.

    Work is split into fixed-size chunks so results do not depend on how
    callers partition the stack.
    """
    dim = _check_models(models)
    maps = np.asarray(maps, dtype=float)
    out = np.empty((maps.shape[0], len(models)))
    for start in range(0, maps.shape[0], chunk):
        block = maps[start:start + chunk]
        X = np.stack([candidate_maps(m, cfg) for m in block])
        n, r = X.shape[:2]
        X = X.reshape(n * r, dim)
        sq = np.einsum("ij,ij->i", X, X)
        for k, model in enumerate(models):
            P = X @ model.basis
            res = (sq - np.einsum("ij,ij->i", P, P)).reshape(n, r)
            out[start:start + n, k] = np.maximum(0.0, res.min(axis=1))
    return out


def predict_maps(maps, models, cfg: ClassifierConfig) -> np.ndarray:
    dist = batch_distances(maps, models, cfg)
    labels = np.asarray([m.class_label for m in models])
    return labels[np.argmin(dist, axis=1)]


def classify_map(m, models, cfg: ClassifierConfig):
    dist = class_distances(m, models, cfg)
    # np.argmin returns the first minimum, i.e. the lowest class index
    return models[int(np.argmin(dist))].class_label, dist


def classify(img, models, cfg: ClassifierConfig = ClassifierConfig()):
    """Label one image; returns ``(label, per-class minimum distances)``."""
    stack = check_image_stack(img)
    if stack.shape[0] != 1:
        raise ValidationError("classify takes a single image")
    m = rcdt_batch(stack, cfg.n_theta)[0]
    if m.size != _check_models(models):
        raise ValidationError("image grid does not match the trained models")
    return classify_map(m, models, cfg)
