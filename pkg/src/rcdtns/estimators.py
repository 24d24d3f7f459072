"""scikit-learn compatible wrappers."""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted

from ._validation import ValidationError
from .classifier import ClassifierConfig, batch_distances, train_from_maps
from .data import normalize_image
from .transforms import DEFAULT_N_THETA, rcdt_batch


def _as_images(X, image_shape=None) -> np.ndarray:
    """Accept ``(n, H, W)`` stacks or ``(n, H*W)`` rows with ``image_shape``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        if image_shape is None:
            side = math.isqrt(X.shape[1])
            if side * side != X.shape[1]:
                raise ValidationError("flat rows need image_shape unless images are square")
            image_shape = (side, side)
        X = X.reshape((X.shape[0],) + tuple(image_shape))
    if X.ndim != 3 or X.shape[0] == 0:
        raise ValidationError(f"expected a nonempty (n, H, W) image stack, got shape {X.shape}")
    if not np.all(np.isfinite(X)) or np.any(X < 0):
        raise ValidationError("images must be finite and nonnegative")
    return np.stack([normalize_image(im) for im in X])


class RCDTTransformer(TransformerMixin, BaseEstimator):
    """Map images to flattened R-CDT vectors.

    Inputs are normalized to unit mass first, so raw intensities are fine.
    """

    def __init__(self, n_theta: int = DEFAULT_N_THETA, image_shape=None):
        self.n_theta = n_theta
        self.image_shape = image_shape

    def fit(self, X, y=None):
        imgs = _as_images(X, self.image_shape)
        self.image_shape_ = imgs.shape[1:]
        self.n_features_out_ = rcdt_batch(imgs[:1], self.n_theta)[0].size
        return self

    def transform(self, X):
        check_is_fitted(self, "image_shape_")
        imgs = _as_images(X, self.image_shape_)
        if imgs.shape[1:] != self.image_shape_:
            raise ValidationError(f"fitted on {self.image_shape_} images, got {imgs.shape[1:]}")
        return rcdt_batch(imgs, self.n_theta).reshape(len(imgs), -1)


class RCDTNSClassifier(ClassifierMixin, BaseEstimator):
    """Nearest-subspace classifier in R-CDT space with affine spanning sets."""

    def __init__(self, variance_fraction=0.99, use_translation_set=True, use_affine_set=True,
                 rotation_search=True, rotation_stride=1, rotation_max=math.pi,
                 n_theta=DEFAULT_N_THETA, image_shape=None):
        self.variance_fraction = variance_fraction
        self.use_translation_set = use_translation_set
        self.use_affine_set = use_affine_set
        self.rotation_search = rotation_search
        self.rotation_stride = rotation_stride
        self.rotation_max = rotation_max
        self.n_theta = n_theta
        self.image_shape = image_shape

    def _config(self) -> ClassifierConfig:
        return ClassifierConfig(self.variance_fraction, self.use_translation_set,
                                self.use_affine_set, self.rotation_search,
                                self.rotation_stride, self.rotation_max, self.n_theta)

    def fit(self, X, y):
        imgs = _as_images(X, self.image_shape)
        y = np.asarray(y)
        if y.shape != (imgs.shape[0],):
            raise ValidationError(f"{imgs.shape[0]} images but y has shape {y.shape}")
        check_classification_targets(y)
        self.config_ = self._config()
        self.classes_ = np.unique(y)
        self.image_shape_ = imgs.shape[1:]
        maps = rcdt_batch(imgs, self.n_theta)
        self.models_ = train_from_maps([maps[y == c] for c in self.classes_], self.config_,
                                       list(range(len(self.classes_))))
        self.n_components_ = self.models_[0].d
        return self

    def _maps(self, X):
        check_is_fitted(self, "models_")
        imgs = _as_images(X, self.image_shape_)
        if imgs.shape[1:] != self.image_shape_:
            raise ValidationError(f"fitted on {self.image_shape_} images, got {imgs.shape[1:]}")
        return rcdt_batch(imgs, self.n_theta)

    def distances(self, X) -> np.ndarray:
        """Minimum squared subspace distance per class, shape ``(n, n_classes)``."""
        return batch_distances(self._maps(X), self.models_, self.config_)

    def decision_function(self, X):
        return -self.distances(X)

    def predict(self, X):
        dist = self.distances(X)
        return self.classes_[np.argmin(dist, axis=1)]

