"""Small input-validation helpers used by the estimators and functions."""

import numbers

import numpy as np

from .exceptions import InvalidArgumentError


def check_int(value, name, *, min_value=None, max_value=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise InvalidArgumentError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if min_value is not None and value < min_value:
        raise InvalidArgumentError(f"{name} must be >= {min_value}, got {value}")
    if max_value is not None and value > max_value:
        raise InvalidArgumentError(f"{name} must be <= {max_value}, got {value}")
    return value


def check_real(value, name, *, positive=False, nonnegative=False):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise InvalidArgumentError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise InvalidArgumentError(f"{name} must be finite, got {value}")
    if positive and value <= 0:
        raise InvalidArgumentError(f"{name} must be > 0, got {value}")
    if nonnegative and value < 0:
        raise InvalidArgumentError(f"{name} must be >= 0, got {value}")
    return value


def check_array(x, name="array", *, ndim=None, min_rows=None, allow_empty=False):
    """Return ``x`` as a float64 ndarray after shape checks."""
    try:
        arr = np.asarray(x, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"{name} is not numeric: {exc}") from None
    if ndim is not None and arr.ndim != ndim:
        raise InvalidArgumentError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise InvalidArgumentError(f"{name} must be non-empty")
    if min_rows is not None and arr.shape[0] < min_rows:
        raise InvalidArgumentError(
            f"{name} needs at least {min_rows} rows, got {arr.shape[0]}"
        )
    return arr


def check_is_fitted(estimator, attribute):
    if not hasattr(estimator, attribute):
        from sklearn.exceptions import NotFittedError

        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call 'fit' first."
        )
