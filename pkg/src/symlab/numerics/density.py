"""Gaussian-smoothed histograms and their summaries."""

import math
from dataclasses import dataclass

import numpy as np

from .._validation import check_array, check_int, check_real


@dataclass(frozen=True)
class DensityCurve:
    bin_centers: np.ndarray
    density: np.ndarray
    sigma_bins: float

    def integral(self):
        return float(np.trapezoid(self.density, self.bin_centers))

    def mean(self):
        """First moment of the curve itself (not of the raw values)."""
        return float(np.trapezoid(self.bin_centers * self.density, self.bin_centers))

    def to_dict(self):
        return {
            "bin_centers": self.bin_centers.tolist(),
            "density": self.density.tolist(),
            "sigma_bins": self.sigma_bins,
        }


def gaussian_kernel(sigma_bins):
    radius = max(1, math.ceil(4.0 * sigma_bins))
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (k / sigma_bins) ** 2)
    return kernel / kernel.sum()


def smoothed_histogram(values, bins=50, sigma_bins=2.0):
    """Histogram ``values`` over their range and smooth with a Gaussian.

    The range is ``[min, max]``, widened by 0.5 on each side when all values
    coincide. The smoothed counts are rescaled so that the trapezoidal
    integral over the bin centers is one.
    """
    values = check_array(values, "values").ravel()
    bins = check_int(bins, "bins", min_value=2)
    sigma_bins = check_real(sigma_bins, "sigma_bins", positive=True)
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    centers = 0.5 * (edges[:-1] + edges[1:])
    kernel = gaussian_kernel(sigma_bins)
    radius = kernel.size // 2
    # "full" then crop: "same" misbehaves when the kernel is longer than the data
    smooth = np.convolve(counts.astype(np.float64), kernel)[radius : radius + bins]
    density = smooth / np.trapezoid(smooth, centers)
    return DensityCurve(bin_centers=centers, density=density, sigma_bins=sigma_bins)


def density_summary(curve, raw_values):
    """Return ``{"mean": ..., "peak": ...}``.

    ``mean`` is the arithmetic mean of the raw values; ``peak`` is the bin
    center of the highest smoothed density (first one on ties).
    """
    raw = check_array(raw_values, "raw_values").ravel()
    peak = curve.bin_centers[int(np.argmax(curve.density))]
    return {"mean": float(np.mean(raw)), "peak": float(peak)}
