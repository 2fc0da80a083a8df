"""scikit-learn compatible wrapper around the network and training loop.

``ConvNetClassifier`` exposes the usual fit/predict/predict_proba surface
(plus ``get_params``/``set_params`` via ``BaseEstimator``), so the
classifier drops into sklearn pipelines, grid search and scoring.  Default
hyperparameters mirror the studied training setup (Adam, lr 5e-6, batch 50,
50 epochs, full backbone); tests and quick experiments typically pass
``architecture="tiny"`` with a larger learning rate.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .datamodel import PreprocessSpec
from .errors import ParameterError, ValidationError
from .network import alexnet_spec, build_network, tiny_spec
from .network.model import predict_proba as network_predict_proba
from .seeding import derive_rng
from .trainer import ArrayDataset, Hyperparameters, train
from .validation import check_image_batch, check_labels

_ARCHITECTURES = {"alexnet": alexnet_spec, "tiny": tiny_spec}
_INPUT_SIDES = {"alexnet": 224, "tiny": 96}


class ImageStandardizer(BaseEstimator, TransformerMixin):
    """Stateless transformer: 8-bit images -> standardized (N, 3, S, S) floats."""

    def __init__(self, resize_side=224, channel_means=None, channel_stds=None,
                 scale_to_unit=True):
        self.resize_side = resize_side
        self.channel_means = channel_means
        self.channel_stds = channel_stds
        self.scale_to_unit = scale_to_unit

    def _spec(self) -> PreprocessSpec:
        defaults = PreprocessSpec(resize_side=self.resize_side)
        return PreprocessSpec(
            resize_side=self.resize_side,
            channel_means=tuple(self.channel_means) if self.channel_means else defaults.channel_means,
            channel_stds=tuple(self.channel_stds) if self.channel_stds else defaults.channel_stds,
            scale_to_unit=self.scale_to_unit,
        )

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return check_image_batch(X, self._spec())


class ConvNetClassifier(BaseEstimator, ClassifierMixin):
    """Convolutional image classifier with an sklearn estimator surface.

    Parameters mirror the trainer's hyperparameters; ``architecture``
    selects the layer plan ("alexnet" or "tiny").  ``fit`` holds out a
    stratified ``val_fraction`` of the data for the per-epoch validation
    curve; the fitted network is kept in ``network_`` and the curve in
    ``curve_``.
    """

    def __init__(self, architecture="alexnet", optimizer="adam",
                 learning_rate=0.000005, batch_size=50, epochs=50,
                 adam_beta1=0.9, adam_beta2=0.999, adam_eps=1e-8,
                 val_fraction=0.1, random_state=0):
        self.architecture = architecture
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_eps = adam_eps
        self.val_fraction = val_fraction
        self.random_state = random_state

    def _hyperparameters(self) -> Hyperparameters:
        hp = Hyperparameters(optimizer=self.optimizer, learning_rate=self.learning_rate,
                             batch_size=self.batch_size, epochs=self.epochs,
                             adam_beta1=self.adam_beta1, adam_beta2=self.adam_beta2,
                             adam_eps=self.adam_eps, seed=self.random_state)
        hp.validate()
        return hp

    def _val_split(self, y_idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if not 0.0 < self.val_fraction < 1.0:
            raise ParameterError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        rng = derive_rng(self.random_state, 101)
        train_idx, val_idx = [], []
        for cls in np.unique(y_idx):
            members = np.flatnonzero(y_idx == cls)
            if len(members) < 2:
                raise ValidationError(f"class {cls} has {len(members)} sample(s); "
                                      f"need at least 2 to hold out validation data")
            members = rng.permutation(members)
            n_val = min(max(1, round(len(members) * self.val_fraction)), len(members) - 1)
            val_idx.extend(members[:n_val])
            train_idx.extend(members[n_val:])
        return np.sort(np.array(train_idx)), np.sort(np.array(val_idx))

    def fit(self, X, y):
        if self.architecture not in _ARCHITECTURES:
            raise ParameterError(f"architecture must be one of {sorted(_ARCHITECTURES)}, "
                                 f"got {self.architecture!r}")
        hp = self._hyperparameters()
        preprocess = PreprocessSpec(resize_side=_INPUT_SIDES[self.architecture])
        batch = check_image_batch(X, preprocess)
        y = check_labels(y, len(batch))
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise ValidationError(f"need at least 2 classes, got {len(self.classes_)}")
        y_idx = np.searchsorted(self.classes_, y)

        spec = _ARCHITECTURES[self.architecture](num_classes=len(self.classes_))
        network = build_network(spec, seed=self.random_state,
                                class_names=tuple(str(c) for c in self.classes_),
                                preprocess=preprocess)
        train_idx, val_idx = self._val_split(y_idx)
        result = train(network,
                       ArrayDataset(batch[train_idx], y_idx[train_idx]),
                       ArrayDataset(batch[val_idx], y_idx[val_idx]),
                       hp)
        self.network_ = result.network
        self.curve_ = result.curve
        self.best_epoch_ = result.best_epoch
        self.best_val_accuracy_ = result.best_val_accuracy
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        batch = check_image_batch(X, self.network_.preprocess)
        out = []
        for start in range(0, len(batch), self.batch_size):
            out.append(network_predict_proba(self.network_, batch[start:start + self.batch_size]))
        return np.concatenate(out)

    def predict(self, X):
        return self.classes_[self.predict_proba(X).argmax(axis=1)]
