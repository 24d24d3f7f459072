"""Spanning sets for affine invariance and the angular rotation permutation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError

TRANSLATION = "translation"
ANISOTROPIC = "anisotropic"
SHEAR = "shear"
SAMPLE = "sample"


@dataclass
class SpanningSet:
    elements: list = field(default_factory=list)
    provenance: list = field(default_factory=list)

    def __len__(self):
        return len(self.elements)

    def matrix(self) -> np.ndarray:
        """Elements as columns of a ``(N_q * N_theta, n)`` matrix."""
        if not self.elements:
            return np.zeros((0, 0))
        return np.stack([e.ravel() for e in self.elements], axis=1)

    def __add__(self, other: "SpanningSet") -> "SpanningSet":
        return SpanningSet(self.elements + other.elements, self.provenance + other.provenance)


def theta_grid(n_theta: int) -> np.ndarray:
    return np.arange(n_theta) * (np.pi / n_theta)


def spanning_translation(grid) -> SpanningSet:
    """``cos(theta)`` and ``sin(theta)``, constant along the quantile axis."""
    n_q, n_theta = (int(g) for g in grid)
    if n_q < 1 or n_theta < 1:
        raise ValidationError(f"invalid grid {grid}")
    th = theta_grid(n_theta)
    ones = np.ones((n_q, 1))
    return SpanningSet([ones * np.cos(th)[None], ones * np.sin(th)[None]],
                       [TRANSLATION, TRANSLATION])


def spanning_affine(samples) -> SpanningSet:
    """Anisotropic-scaling and shear elements for each training map.

    For every map ``m`` this emits ``cos^2(theta) m``, ``sin^2(theta) m`` and
    ``sin(2 theta) m``. Their span equals the span of the anisotropic-scaling
    pair together with the horizontal and vertical shear families.
    """
    samples = list(samples)
    if not samples:
        raise ValidationError("spanning_affine needs at least one sample")
    shape = np.shape(samples[0])
    elements, tags = [], []
    for m in samples:
        m = np.asarray(m, dtype=float)
        if m.ndim != 2 or m.shape != shape:
            raise ValidationError("all samples must be 2D maps of the same shape")
        th = theta_grid(m.shape[1])
        c2, s2, s2t = np.cos(th) ** 2, np.sin(th) ** 2, np.sin(2 * th)
        elements += [m * c2[None], m * s2[None], m * s2t[None]]
        tags += [ANISOTROPIC, ANISOTROPIC, SHEAR]
    return SpanningSet(elements, tags)


def rotate_rcdt(m, shift: int) -> np.ndarray:
    """Apply the R-CDT counterpart of rotating the image by ``shift * pi / N_theta``.

    Columns move right by ``shift``; those that wrap past ``theta = pi`` are
    replaced by their t-reflection ``-m(1 - q)``.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValidationError("R-CDT map must be 2D")
    n_theta = m.shape[1]
    if isinstance(shift, bool) or int(shift) != shift or not 0 <= shift < n_theta:
        raise ValidationError(f"shift must be an integer in [0, {n_theta}), got {shift}")
    shift = int(shift)
    if shift == 0:
        return m.copy()
    out = np.empty_like(m)
    out[:, shift:] = m[:, : n_theta - shift]
    out[:, :shift] = -m[::-1, n_theta - shift:]
    return out


def reflect_rcdt(m) -> np.ndarray:
    """R-CDT counterpart of rotating the image by pi."""
    m = np.asarray(m, dtype=float)
    return -m[::-1, :]


def rotation_stack(m, stride: int = 1, max_angle: float = math.pi) -> tuple[np.ndarray, np.ndarray]:
    """All rotated versions of ``m`` with ``|angle| <= max_angle`` on the stride grid.

    Returns ``(maps, angles)`` where ``maps`` has shape ``(n_rot, N_q, N_theta)``.
    Rotations by angles in ``[pi, 2 pi)`` are reached by composing a shift with
    :func:`reflect_rcdt`.
    """
    m = np.asarray(m, dtype=float)
    n_theta = m.shape[1]
    if stride < 1:
        raise ValidationError("rotation stride must be positive")
    step = math.pi / n_theta
    maps, angles = [], []
    for k in range(0, 2 * n_theta, stride):
        angle = k * step
        signed = angle if angle <= math.pi else angle - 2 * math.pi
        if abs(signed) > max_angle + 1e-12:
            continue
        base = rotate_rcdt(m, k % n_theta)
        maps.append(base if k < n_theta else reflect_rcdt(base))
        angles.append(signed)
    return np.stack(maps), np.asarray(angles)


# --------------------------------------------------------------------------
# analytic angle and scale factors for small affine deformations
# --------------------------------------------------------------------------

_KINDS = ("aniso", "shear_h", "shear_v")


def _check_kind(kind, params):
    if kind not in _KINDS:
        raise ValidationError(f"kind must be one of {_KINDS}, got {kind!r}")
    if kind == "aniso":
        a, b = params
        if not (a > 0 and b > 0):
            raise ValidationError("anisotropic scale factors must be positive")
        return float(a), float(b)
    val = float(params if np.ndim(params) == 0 else params[0])
    if not np.isfinite(val):
        raise ValidationError("shear must be finite")
    return val


def _nearest_branch(theta_p, theta):
    # choose the representative mod pi closest to theta, then wrap to [0, pi)
    theta_p = theta + (theta_p - theta + np.pi / 2) % np.pi - np.pi / 2
    return np.mod(theta_p, np.pi)


def predict_theta_prime(kind: str, params, theta):
    """Angle at which the undeformed projection is read for a deformed image.

    ``params`` is ``(a, b)`` for ``"aniso"`` and the shear amount for
    ``"shear_h"`` / ``"shear_v"``. Results lie in ``[0, pi)``.
    """
    p = _check_kind(kind, params)
    theta = np.asarray(theta, dtype=float)
    if (kind == "aniso" and p[0] == p[1]) or (kind != "aniso" and p == 0):
        return np.mod(theta, np.pi)
    c, s = np.cos(theta), np.sin(theta)
    if kind == "aniso":
        a, b = p
        tp = np.arctan2(b * s, a * c)
    elif kind == "shear_h":
        tp = np.arctan2(s + p * c, c)
    else:
        tp = np.arctan2(s, c + p * s)
    return _nearest_branch(tp, theta)


def predict_gamma(kind: str, params, theta):
    """Exact scale factor and its first-order approximation, as ``(exact, approx)``."""
    p = _check_kind(kind, params)
    theta = np.asarray(theta, dtype=float)
    c2, s2, s2t = np.cos(theta) ** 2, np.sin(theta) ** 2, np.sin(2 * theta)
    if kind == "aniso":
        a, b = p
        exact = np.sqrt(a * a * c2 + b * b * s2)
        if a <= b:
            approx = a + (b / a - 1.0) * a * s2
        else:
            approx = b + (a / b - 1.0) * b * c2
    elif kind == "shear_h":
        exact = np.sqrt(1 + p * p * c2 + p * s2t)
        approx = 1 + 0.5 * (p * s2t + p * p * c2)
    else:
        exact = np.sqrt(1 + p * p * s2 + p * s2t)
        approx = 1 + 0.5 * (p * s2t + p * p * s2)
    return exact, approx
