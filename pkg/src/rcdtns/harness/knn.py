from __future__ import annotations

import numpy as np

from .._validation import ValidationError


def knn_predict(train_X, train_y, test_X, k: int = 1) -> np.ndarray:
    """Brute-force Euclidean kNN with majority vote.

    Neighbors at equal distance are taken in training order; vote ties go to
    the lowest label.
    """
    A = np.asarray(train_X, dtype=float).reshape(len(train_X), -1)
    B = np.asarray(test_X, dtype=float).reshape(len(test_X), -1)
    y = np.asarray(train_y, dtype=int)
    if k < 1:
        raise ValidationError("k must be at least 1")
    if k > A.shape[0]:
        raise ValidationError(f"k={k} exceeds the training size {A.shape[0]}")
    if A.shape[1] != B.shape[1]:
        raise ValidationError("train and test samples have different sizes")
    d = (B ** 2).sum(1)[:, None] + (A ** 2).sum(1)[None, :] - 2.0 * B @ A.T
    nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
    labels = np.unique(y)
    votes = (y[nearest][:, :, None] == labels[None, None, :]).sum(axis=1)
    return labels[np.argmax(votes, axis=1)]


def knn_baseline(train, test, k: int = 1) -> np.ndarray:
    """kNN on raw normalized pixels of two :class:`LabeledDataset` objects."""
    return knn_predict(train.images, train.labels, test.images, k)
