import numpy as np

from .._validation import check_array
from ..exceptions import InvalidArgumentError


def wasserstein_1d(a, b):
    """1-Wasserstein distance between two equal-size samples on the line.

    For equal-size empirical measures the optimal coupling matches order
    statistics, so the distance is ``mean(|sort(a) - sort(b)|)``.
    """
    a = check_array(a, "a", ndim=1)
    b = check_array(b, "b", ndim=1)
    if a.shape != b.shape:
        raise InvalidArgumentError(
            f"samples must have equal length, got {a.size} and {b.size}"
        )
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def pairwise_wasserstein(rows):
    """Distances for every unordered pair ``r < s`` of rows, in row-major pair order."""
    rows = check_array(rows, "rows", ndim=2)
    srt = np.sort(rows, axis=1)
    r = srt.shape[0]
    iu, ju = np.triu_indices(r, k=1)
    return np.mean(np.abs(srt[iu] - srt[ju]), axis=1)
