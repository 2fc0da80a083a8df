"""Input validation helpers for the estimator-facing API."""

from __future__ import annotations

import numpy as np

from .datamodel import PreprocessSpec, preprocess_for_network
from .errors import ParameterError


def check_image_batch(X, preprocess: PreprocessSpec) -> np.ndarray:
    """Coerce input images to a network-ready (N, 3, S, S) float32 batch.

    Accepts either raw 8-bit (N, H, W, 3) images, which are resized and
    standardized per ``preprocess``, or already-preprocessed float
    (N, 3, S, S) arrays, which are passed through after a shape check.
    """
    X = np.asarray(X)
    side = preprocess.resize_side
    if X.ndim != 4:
        raise ParameterError(f"expected a 4-d image batch, got shape {X.shape}")
    if X.dtype == np.uint8:
        if X.shape[3] != 3:
            raise ParameterError(f"8-bit batches must be (N, H, W, 3), got {X.shape}")
        return np.stack([preprocess_for_network(img, preprocess) for img in X])
    if X.shape[1:] != (3, side, side):
        raise ParameterError(f"float batches must be (N, 3, {side}, {side}), got {X.shape}")
    return X.astype(np.float32, copy=False)


def check_labels(y, n_samples: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != n_samples:
        raise ParameterError(f"y must be a length-{n_samples} vector, got shape {y.shape}")
    return y
