"""Shared numerical kernel: random streams, quadrature, transport, PCA, densities."""

from .decomposition import PCAReducer, pca_reduce
from .density import DensityCurve, density_summary, smoothed_histogram
from .quadrature import QuadratureRule, gauss_legendre, integrate_semi_infinite
from .random import Prng, as_prng
from .tensor_io import read_tensor, write_tensor
from .transport import pairwise_wasserstein, wasserstein_1d

__all__ = [
    "DensityCurve",
    "PCAReducer",
    "Prng",
    "QuadratureRule",
    "as_prng",
    "density_summary",
    "gauss_legendre",
    "integrate_semi_infinite",
    "pairwise_wasserstein",
    "pca_reduce",
    "read_tensor",
    "smoothed_histogram",
    "wasserstein_1d",
    "write_tensor",
]
