"""Dataset I/O, image normalization, affine warps and the synthetic generator."""
from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path

import numpy as np
from scipy import ndimage

from ._validation import ParseError, ValidationError, check_image
from .transforms import pixel_coordinates

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
POSITIVITY_FLOOR = 1e-8
MAX_BORDER_LOSS = 0.01


@dataclass
class LabeledDataset:
    images: np.ndarray
    labels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.images.ndim != 3:
            raise ValidationError(f"images must have shape (n, H, W), got {self.images.shape}")
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValidationError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def shape(self):
        return self.images.shape[1:]

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=int)
        return LabeledDataset(self.images[idx], self.labels[idx], dict(self.meta))


# --------------------------------------------------------------------------
# normalization and warps
# --------------------------------------------------------------------------

def normalize_image(raw) -> np.ndarray:
    """Turn a nonnegative grid into a strictly positive unit-mass image.

    Pixels below ``1e-8 * max`` are raised to that floor before dividing by
    the total, which keeps the operation idempotent.
    """
    arr = np.asarray(raw, dtype=float)
    if arr.ndim != 2:
        raise ValidationError(f"image must be 2D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValidationError("image must be finite and nonnegative")
    peak = arr.max()
    if peak <= 0:
        raise ValidationError("image has no positive pixel")
    out = np.maximum(arr, POSITIVITY_FLOOR * peak)
    return out / out.sum()


def _warp(img: np.ndarray, A: np.ndarray, x0) -> np.ndarray:
    H, W = img.shape
    x, y = pixel_coordinates((H, W))
    X, Y = np.meshgrid(x, y)
    Ainv = np.linalg.inv(A)
    px = X - x0[0]
    py = Y - x0[1]
    sx = Ainv[0, 0] * px + Ainv[0, 1] * py
    sy = Ainv[1, 0] * px + Ainv[1, 1] * py
    coords = np.stack([sy + (H - 1) / 2, sx + (W - 1) / 2])
    out = ndimage.map_coordinates(img, coords, order=1, mode="constant", cval=0.0)
    return out / abs(np.linalg.det(A))


def apply_affine(img, A, x0=(0.0, 0.0), return_loss: bool = False):
    """Move image content by ``y -> A y + x0`` about the image center.

    The output is sampled by inverse mapping with bilinear interpolation,
    scaled by ``1/|det A|`` and renormalized to unit mass. With
    ``return_loss`` the fraction of mass lost at the border before
    renormalization is returned too, measured as the share of source mass
    mapped outside the frame.
    """
    img = check_image(img)
    A = np.asarray(A, dtype=float)
    if A.shape != (2, 2) or not np.all(np.isfinite(A)):
        raise ValidationError("A must be a finite 2x2 matrix")
    if abs(np.linalg.det(A)) < 1e-12:
        raise ValidationError("A is singular")
    x0 = np.asarray(x0, dtype=float).reshape(2)
    out = _warp(img, A, x0)
    mass = out.sum()
    if mass <= 0:
        raise ValidationError("warp moved all mass outside the image")
    out = out / mass
    if return_loss:
        return out, _border_loss(img, A, x0)
    return out


def _border_loss(img, A, x0) -> float:
    # mass whose pixel centers land outside the frame; unlike the resampled
    # sum this is not affected by interpolation aliasing of thin strokes
    H, W = img.shape
    x, y = pixel_coordinates((H, W))
    X, Y = np.meshgrid(x, y)
    tx = A[0, 0] * X + A[0, 1] * Y + x0[0]
    ty = A[1, 0] * X + A[1, 1] * Y + x0[1]
    outside = (np.abs(tx) > W / 2) | (np.abs(ty) > H / 2)
    return float(img[outside].sum() / img.sum())


def rotate_image(img, angle: float) -> np.ndarray:
    """Rotate image content counterclockwise (in x, y coordinates) by ``angle``."""
    c, s = math.cos(angle), math.sin(angle)
    return apply_affine(img, [[c, -s], [s, c]])


# --------------------------------------------------------------------------
# IDX files
# --------------------------------------------------------------------------

def _read_bytes(path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    raw = path.read_bytes()
    if path.suffix == ".gz":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, expected_magic: int, ndim: int, what: str) -> np.ndarray:
    if len(raw) < 4:
        raise ParseError(f"{what} file truncated in magic number", len(raw))
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise ParseError(
            f"{what} file has magic 0x{magic:08x}, expected 0x{expected_magic:08x}", 0)
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise ParseError(f"{what} file truncated in dimension header", len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    n_bytes = int(np.prod(dims))
    if len(raw) < header + n_bytes:
        raise ParseError(
            f"{what} file truncated: need {n_bytes} data bytes, have {len(raw) - header}",
            len(raw))
    if len(raw) > header + n_bytes:
        raise ParseError(f"{what} file has trailing bytes", header + n_bytes)
    return np.frombuffer(raw, dtype=np.uint8, count=n_bytes, offset=header).reshape(dims)


def read_idx_images(path) -> np.ndarray:
    """Raw uint8 image array ``(n, rows, cols)`` from an IDX image file."""
    return _parse_idx(_read_bytes(path), IDX_IMAGE_MAGIC, 3, "image")


def read_idx_labels(path) -> np.ndarray:
    return _parse_idx(_read_bytes(path), IDX_LABEL_MAGIC, 1, "label")


def load_idx(images_path, labels_path) -> LabeledDataset:
    """Load an IDX image/label file pair as normalized images."""
    raw = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if raw.shape[0] != labels.shape[0]:
        raise ParseError(
            f"image file holds {raw.shape[0]} items but label file holds {labels.shape[0]}", 4)
    images = np.stack([normalize_image(im / 255.0) for im in raw]) if len(raw) else \
        np.zeros((0,) + raw.shape[1:])
    meta = {"source": f"idx:{Path(images_path).name}", "seed": None}
    return LabeledDataset(images, labels.astype(int), meta)


def write_idx_images(path, images) -> None:
    arr = np.asarray(images)
    if arr.ndim != 3:
        raise ValidationError("images must have shape (n, rows, cols)")
    arr = _to_uint8(arr)
    head = struct.pack(">I3I", IDX_IMAGE_MAGIC, *arr.shape)
    Path(path).write_bytes(head + arr.tobytes(order="C"))


def write_idx_labels(path, labels) -> None:
    arr = np.asarray(labels)
    if arr.ndim != 1 or np.any(arr < 0) or np.any(arr > 255):
        raise ValidationError("labels must be a 1D array of values in [0, 255]")
    head = struct.pack(">II", IDX_LABEL_MAGIC, arr.shape[0])
    Path(path).write_bytes(head + arr.astype(np.uint8).tobytes())


def _to_uint8(arr: np.ndarray) -> np.ndarray:
    if arr.dtype == np.uint8:
        return arr
    out = np.empty(arr.shape, dtype=np.uint8)
    for i, im in enumerate(arr):
        peak = im.max()
        scaled = im / peak if peak > 0 else im
        out[i] = np.clip(np.rint(scaled * 255), 0, 255).astype(np.uint8)
    return out


# --------------------------------------------------------------------------
# built-in templates
# --------------------------------------------------------------------------

# Stroke polylines in glyph coordinates (x right, y down, box [-1, 1]^2).
_GLYPHS = {
    "F": [[(-0.6, 1), (-0.6, -1), (0.7, -1)], [(-0.6, -0.1), (0.4, -0.1)]],
    "G": [[(0.7, -0.6), (0.3, -1), (-0.4, -1), (-0.8, -0.5), (-0.8, 0.5), (-0.4, 1),
           (0.3, 1), (0.7, 0.6), (0.7, 0.1), (0.1, 0.1)]],
    "J": [[(-0.3, -1), (0.8, -1)], [(0.4, -1), (0.4, 0.6), (0.1, 1), (-0.4, 1), (-0.7, 0.6)]],
    "K": [[(-0.6, -1), (-0.6, 1)], [(0.7, -1), (-0.6, 0.15)], [(-0.2, -0.2), (0.7, 1)]],
    "P": [[(-0.6, 1), (-0.6, -1), (0.3, -1), (0.8, -0.6), (0.8, -0.2), (0.3, 0.1), (-0.6, 0.1)]],
    "Q": [[(0.0, -1), (-0.6, -0.8), (-0.9, -0.2), (-0.8, 0.5), (-0.3, 0.95), (0.3, 0.95),
           (0.8, 0.5), (0.9, -0.2), (0.6, -0.8), (0.0, -1)], [(0.2, 0.4), (0.9, 1.0)]],
    "4": [[(0.4, 1), (0.4, -1), (-0.8, 0.4), (0.8, 0.4)]],
    "7": [[(-0.8, -1), (0.8, -1), (-0.2, 1)], [(-0.3, 0.0), (0.5, 0.0)]],
    "Y": [[(-0.8, -1), (0.0, -0.1), (0.8, -1)], [(0.0, -0.1), (0.0, 1)], [(-0.4, 1), (0.4, 1)]],
    "h": [[(-0.6, -1), (-0.6, 1)], [(-0.6, 0.0), (0.0, -0.4), (0.6, -0.1), (0.6, 1)]],
}
TEMPLATE_NAMES = tuple(_GLYPHS)


def _segment_distance(px, py, a, b):
    ax, ay = a
    bx, by = b
    vx, vy = bx - ax, by - ay
    L2 = vx * vx + vy * vy
    if L2 == 0:
        return np.hypot(px - ax, py - ay)
    t = np.clip(((px - ax) * vx + (py - ay) * vy) / L2, 0.0, 1.0)
    return np.hypot(px - (ax + t * vx), py - (ay + t * vy))


def render_glyph(name: str, shape=(64, 64), half_size: float | None = None,
                 stroke: float | None = None) -> np.ndarray:
    """Rasterize a named glyph as a binary mask centered in the image."""
    H, W = shape
    side = min(H, W)
    half_size = 0.22 * side if half_size is None else half_size
    stroke = max(1.0, 0.025 * side) if stroke is None else stroke
    x, y = pixel_coordinates((H, W))
    X, Y = np.meshgrid(x, y)
    mask = np.zeros((H, W), dtype=bool)
    for line in _GLYPHS[name]:
        for a, b in zip(line[:-1], line[1:]):
            a = (a[0] * half_size, a[1] * half_size)
            b = (b[0] * half_size, b[1] * half_size)
            mask |= _segment_distance(X, Y, a, b) <= stroke
    return mask.astype(float)


def builtin_templates(n_classes: int = 10, shape=(64, 64)) -> list[np.ndarray]:
    """Fixed, rotation-asymmetric glyph templates, normalized to unit mass."""
    if not 1 <= n_classes <= len(_GLYPHS):
        raise ValidationError(f"n_classes must be in [1, {len(_GLYPHS)}], got {n_classes}")
    shape = (int(shape[0]), int(shape[1]))
    if min(shape) < 8:
        raise ValidationError("template shape must be at least 8x8")
    return [normalize_image(render_glyph(n, shape)) for n in TEMPLATE_NAMES[:n_classes]]


# --------------------------------------------------------------------------
# synthetic affine dataset
# --------------------------------------------------------------------------

@dataclass
class DeformationRange:
    """Uniform sampling ranges for the affine generator.

    Translation, shear and rotation are symmetric magnitudes; ``iso_scale``
    and ``scale_ratio`` are closed intervals. ``scale_ratio`` is b/a, the
    ratio of vertical to horizontal scaling.
    """

    translation_max: float = 4.0
    iso_scale: tuple = (0.9, 1.1)
    scale_ratio: tuple = (0.88, 1.12)
    shear_max: float = 0.065
    rotation_max: float = math.pi
    enable_translation: bool = True
    enable_iso_scale: bool = True
    enable_aniso_scale: bool = True
    enable_shear: bool = True
    enable_rotation: bool = True

    def __post_init__(self):
        self.iso_scale = tuple(float(v) for v in self.iso_scale)
        self.scale_ratio = tuple(float(v) for v in self.scale_ratio)
        for name in ("iso_scale", "scale_ratio"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValidationError(f"{name} must be an interval of positive values, got {(lo, hi)}")
        for name in ("translation_max", "shear_max", "rotation_max"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValidationError(f"{name} must be finite and nonnegative")
        if self.rotation_max > math.pi:
            raise ValidationError("rotation_max must not exceed pi")

    @classmethod
    def identity(cls) -> "DeformationRange":
        return cls(0.0, (1.0, 1.0), (1.0, 1.0), 0.0, 0.0)

    @classmethod
    def from_dict(cls, d: dict) -> "DeformationRange":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown deformation keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["iso_scale"] = list(self.iso_scale)
        out["scale_ratio"] = list(self.scale_ratio)
        return out

    def magnitude_intervals(self) -> dict:
        """Per-parameter sampling sets used by the generator."""
        def sym(m):
            return (-m, m)

        return {
            "tx": sym(self.translation_max) if self.enable_translation else (0.0, 0.0),
            "ty": sym(self.translation_max) if self.enable_translation else (0.0, 0.0),
            "iso": self.iso_scale if self.enable_iso_scale else (1.0, 1.0),
            "ratio": self.scale_ratio if self.enable_aniso_scale else (1.0, 1.0),
            "h": sym(self.shear_max) if self.enable_shear else (0.0, 0.0),
            "v": sym(self.shear_max) if self.enable_shear else (0.0, 0.0),
            "rot": sym(self.rotation_max) if self.enable_rotation else (0.0, 0.0),
        }

    def contains(self, other: "DeformationRange") -> bool:
        mine, theirs = self.magnitude_intervals(), other.magnitude_intervals()
        return all(mine[k][0] <= theirs[k][0] and theirs[k][1] <= mine[k][1] for k in mine)


PARAM_NAMES = ("tx", "ty", "iso", "ratio", "h", "v", "rot")


def _sample_interval(rng, lo, hi, exclude=None) -> float:
    if exclude is None:
        return lo if hi == lo else rng.uniform(lo, hi)
    elo, ehi = exclude
    left = max(0.0, min(elo, hi) - lo)
    right = max(0.0, hi - max(ehi, lo))
    total = left + right
    if total <= 0:
        return lo if hi == lo else rng.uniform(lo, hi)
    u = rng.uniform(0.0, total)
    return lo + u if u < left else max(ehi, lo) + (u - left)


def sample_params(rng, ranges: DeformationRange, exclude: DeformationRange | None = None) -> dict:
    """Draw one parameter set; with ``exclude`` draw from the set difference."""
    iv = ranges.magnitude_intervals()
    ex = exclude.magnitude_intervals() if exclude is not None else {}
    return {k: float(_sample_interval(rng, *iv[k], exclude=ex.get(k))) for k in PARAM_NAMES}


def compose_affine(p: dict) -> tuple[np.ndarray, np.ndarray]:
    """Compose scale, then shear, then rotation; translation is applied last."""
    a = p["iso"]
    S = np.diag([a, a * p["ratio"]])
    Sh = np.array([[1.0, p["h"]], [0.0, 1.0]]) @ np.array([[1.0, 0.0], [p["v"], 1.0]])
    c, s = math.cos(p["rot"]), math.sin(p["rot"])
    R = np.array([[c, -s], [s, c]])
    return R @ Sh @ S, np.array([p["tx"], p["ty"]])


def instance_rng(seed: int, class_index: int, instance: int, stream: int = 0) -> np.random.Generator:
    key = [int(seed), int(stream), int(class_index), int(instance)]
    return np.random.default_rng(np.random.SeedSequence(key))


def synth_affine_dataset(templates, ranges: DeformationRange, n_per_class: int, seed: int,
                         exclude: DeformationRange | None = None,
                         stream: int = 0) -> LabeledDataset:
    """Deform every template ``n_per_class`` times with random affine maps.

    Each instance gets its own RNG derived from ``(seed, stream, class,
    instance)`` so generation order does not matter. With ``exclude`` the
    parameters are drawn from ``ranges`` minus ``exclude``.
    """
    if len(templates) == 0:
        raise ValidationError("at least one template is required")
    if n_per_class < 1:
        raise ValidationError("n_per_class must be positive")
    templates = [check_image(t, "template") for t in templates]
    shape = templates[0].shape
    if any(t.shape != shape for t in templates):
        raise ValidationError("all templates must share one shape")

    images, labels, params = [], [], []
    for k, tpl in enumerate(templates):
        for j in range(n_per_class):
            p = sample_params(instance_rng(seed, k, j, stream), ranges, exclude)
            images.append(_deform(tpl, p, f"class {k}, instance {j}"))
            labels.append(k)
            params.append([p[n] for n in PARAM_NAMES])
    meta = {"source": "synthetic", "seed": int(seed), "params": np.asarray(params),
            "param_names": PARAM_NAMES}
    return LabeledDataset(np.stack(images), np.asarray(labels), meta)


def _deform(img, p, where):
    A, x0 = compose_affine(p)
    warped, loss = apply_affine(img, A, x0, return_loss=True)
    if loss > MAX_BORDER_LOSS:
        raise ValidationError(
            f"deformation ranges too large for {img.shape} images: "
            f"{loss:.1%} of mass left the frame ({where})")
    return normalize_image(warped)


def deform_dataset(ds: LabeledDataset, ranges: DeformationRange, seed: int,
                   exclude: DeformationRange | None = None, stream: int = 0) -> LabeledDataset:
    """Apply one random affine deformation to every image of ``ds``."""
    images, params = [], []
    for i, (img, lab) in enumerate(zip(ds.images, ds.labels)):
        p = sample_params(instance_rng(seed, lab, i, stream), ranges, exclude)
        images.append(_deform(img, p, f"item {i}"))
        params.append([p[n] for n in PARAM_NAMES])
    meta = dict(ds.meta, params=np.asarray(params), param_names=PARAM_NAMES, seed=int(seed))
    return LabeledDataset(np.stack(images), ds.labels.copy(), meta)
