"""scikit-learn compatible wrapper around :func:`~symlab.autodiff.training.train`."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .._validation import check_array, check_is_fitted
from .network import Network, NetworkSpec
from .optim import TrainConfig
from .training import predict, train


class NetClassifier(ClassifierMixin, BaseEstimator):
    """Classifier backed by a :class:`NetworkSpec` trained with cross-entropy.

    Parameters
    ----------
    layers : sequence of LayerSpec
        Hidden stack; the output layer must produce one logit per class.
    optimizer, lr, momentum, weight_decay, epochs, batch_size, seed
        Forwarded to :class:`TrainConfig`.
    """

    def __init__(self, layers=(), optimizer="adam", lr=1e-3, momentum=0.0,
                 weight_decay=0.0, epochs=10, batch_size=64, seed=0):
        self.layers = layers
        self.optimizer = optimizer
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _config(self):
        return TrainConfig(
            optimizer=self.optimizer, lr=self.lr, momentum=self.momentum,
            weight_decay=self.weight_decay, epochs=self.epochs,
            batch_size=self.batch_size, seed=self.seed,
        )

    def fit(self, X, y, eval_data=None):
        X = check_array(X, "X")
        y = np.asarray(y)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        spec = NetworkSpec(input_shape=X.shape[1:], layers=tuple(self.layers), loss="cross_entropy")
        self.network_ = Network(spec)
        if eval_data is not None:
            Xe, ye = eval_data
            eval_data = (Xe, np.searchsorted(self.classes_, ye))
        result = train(self.network_, X, y_idx, self._config(), eval_data=eval_data)
        self.params_ = result.params
        self.history_ = result.trace
        return self

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        return predict(self.network_, self.params_, check_array(X, "X"))

    def predict(self, X):
        check_is_fitted(self, "classes_")
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]

    @property
    def coef_flat_(self):
        """Trained parameters as one flat vector."""
        check_is_fitted(self, "params_")
        return self.params_.flat
