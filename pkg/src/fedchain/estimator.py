"""scikit-learn compatible wrappers around the core algorithms.

``BotClassifier`` exposes the two-layer network through the standard
fit/predict/predict_proba estimator API so it composes with pipelines,
cross-validation and grid search; ``SmoteOversampler`` exposes the SMOTE
expansion through the familiar ``fit_resample`` idiom.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import network as net
from .datasets import Dataset, SmoteConfig, smote_expand
from .seeding import derive_seed


class BotClassifier(ClassifierMixin, BaseEstimator):
    """Two-layer ReLU/softmax classifier trained with mini-batch Adam or SGD.

    Parameters follow the reference training setup by default. The hidden
    width is floor(sqrt(n_features + n_classes)) + width_const.
    """

    def __init__(self, width_const=3, optimizer="adam", learning_rate=1e-5,
                 batch_size=16, epochs=50, adam_beta1=0.9, adam_beta2=0.999,
                 adam_epsilon=1e-8, random_state=0):
        self.width_const = width_const
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_epsilon = adam_epsilon
        self.random_state = random_state

    def _train_config(self, rng_seed):
        return net.TrainConfig(
            optimizer=self.optimizer,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_epsilon=self.adam_epsilon,
            rng_seed=rng_seed,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes to fit")
        self.n_features_in_ = X.shape[1]
        seed = 0 if self.random_state is None else int(self.random_state)
        shape = net.LayerShape.from_dims(self.n_features_in_,
                                         len(self.classes_), self.width_const)
        data = Dataset(X, encoded, tuple(str(c) for c in self.classes_))
        self.model_ = net.train_local(
            net.init_model(shape, derive_seed(seed, "init")),
            data,
            self._train_config(derive_seed(seed, "train")),
        )
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return net.predict_proba(self.model_, X)

    def predict(self, X):
        winners = self.predict_proba(X).argmax(axis=1)
        return self.classes_[winners]


class SmoteOversampler(BaseEstimator):
    """SMOTE resampler: grow every class to a common target size."""

    def __init__(self, k_neighbors=5, target_per_class=None, random_state=0):
        self.k_neighbors = k_neighbors
        self.target_per_class = target_per_class
        self.random_state = random_state

    def fit_resample(self, X, y):
        X = check_array(X)
        y = np.asarray(y)
        classes, encoded = np.unique(y, return_inverse=True)
        target = self.target_per_class
        if target is None:
            target = int(np.bincount(encoded).max())
        data = Dataset(X, encoded, tuple(str(c) for c in classes))
        seed = 0 if self.random_state is None else int(self.random_state)
        grown = smote_expand(data, SmoteConfig(self.k_neighbors, target, seed))
        return grown.features, classes[grown.labels]


__all__ = ["BotClassifier", "SmoteOversampler"]
