"""Deterministic PCA used as the reduction stage of the replica metric."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .._validation import check_array, check_int, check_is_fitted


def _fix_signs(components):
    # largest-magnitude loading of each component is made positive
    idx = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(components.shape[0]), idx])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


class PCAReducer(TransformerMixin, BaseEstimator):
    """Project rows onto their top principal components.

    Parameters
    ----------
    n_components : int, default=100
        Target dimension ``d``. The fitted dimension is ``min(d, R, D)``.

    Attributes
    ----------
    mean_ : ndarray of shape (D,)
    components_ : ndarray of shape (k, D)
        Orthonormal rows ordered by descending explained variance, each with
        its largest-magnitude loading positive.
    explained_variance_ : ndarray of shape (k,)
    """

    def __init__(self, n_components=100):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X, "X", ndim=2, min_rows=2)
        d = check_int(self.n_components, "n_components", min_value=1)
        r, D = X.shape
        k = min(d, r, D)
        self.mean_ = X.mean(axis=0)
        _, s, vt = np.linalg.svd(X - self.mean_, full_matrices=False)
        self.components_ = _fix_signs(vt[:k])
        self.explained_variance_ = s[:k] ** 2 / (r - 1)
        self.n_features_in_ = D
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, "X", ndim=2)
        return (X - self.mean_) @ self.components_.T

    def inverse_transform(self, Z):
        check_is_fitted(self, "components_")
        return np.asarray(Z) @ self.components_ + self.mean_


def pca_reduce(rows, d):
    """Reduce an ``R x D`` matrix to ``R x min(d, R, D)`` principal scores."""
    return PCAReducer(n_components=d).fit_transform(rows)
