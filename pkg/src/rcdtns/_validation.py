"""Exceptions and input checks shared across the package."""
from __future__ import annotations

import numpy as np

MASS_TOL = 1e-6


class ValidationError(ValueError):
    """Raised when an input violates an operation's preconditions."""


class ParseError(ValueError):
    """Raised on malformed binary input (IDX or model files)."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(ValueError):
    """Raised for invalid experiment configurations."""


def check_density_1d(values, dx: float, name: str = "signal") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise ValidationError(f"{name} must be a 1D array with at least 2 samples")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    if np.any(arr < 0):
        raise ValidationError(f"{name} has negative values")
    mass = arr.sum() * dx
    if mass <= 0:
        raise ValidationError(f"{name} has zero mass")
    if abs(mass - 1.0) > MASS_TOL:
        raise ValidationError(f"{name} is not unit mass (mass={mass:.9g})")
    return arr


def check_image(img, name: str = "image") -> np.ndarray:
    arr = np.asarray(img, dtype=float)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be a 2D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    if np.any(arr < 0):
        raise ValidationError(f"{name} has negative pixels")
    mass = arr.sum()
    if abs(mass - 1.0) > MASS_TOL:
        raise ValidationError(f"{name} is not unit mass (mass={mass:.9g}); use normalize_image")
    return arr


def check_image_stack(X, name: str = "X") -> np.ndarray:
    """Accept a single image or a stack of images, return a 3D float array."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValidationError(f"{name} must have shape (n, H, W), got {arr.shape}")
    if arr.shape[0] == 0:
        raise ValidationError(f"{name} is empty")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValidationError(f"{name} must be finite and nonnegative")
    masses = arr.sum(axis=(1, 2))
    if np.any(np.abs(masses - 1.0) > MASS_TOL):
        raise ValidationError(f"{name} contains images that are not unit mass; use normalize_image")
    return arr
