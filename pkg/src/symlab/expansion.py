"""Input-dimension expansion transforms.

Images are spread onto a ``K``-times larger grid with the original pixels at
stride-``K`` positions; vectors are expanded by interleaving constant
channels; embeddings are interleaved with zeros.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_array, check_int, check_real
from .exceptions import InvalidArgumentError
from .numerics.random import as_prng


class ExpansionFactorWarning(UserWarning):
    """Expansion factor larger than the first convolution kernel."""


@dataclass(frozen=True)
class Fill:
    """Placeholder policy: ``kind="constant"`` uses ``value``; ``kind="normal"``
    draws each placeholder from N(mean, std), clipped to ``clip`` when set."""

    kind: str = "constant"
    value: float = 0.5
    mean: float = 0.5
    std: float = 0.25
    clip: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.kind not in ("constant", "normal"):
            raise InvalidArgumentError(f"fill kind must be 'constant' or 'normal', got {self.kind!r}")
        check_real(self.value, "fill value")
        check_real(self.mean, "fill mean")
        check_real(self.std, "fill std", nonnegative=True)

    @classmethod
    def parse(cls, text):
        """``"0.5"`` -> constant, ``"random"`` / ``"normal"`` -> default normal fill."""
        if isinstance(text, Fill):
            return text
        if isinstance(text, (int, float)):
            return cls("constant", value=float(text))
        if str(text).lower() in ("random", "normal"):
            return cls("normal")
        try:
            return cls("constant", value=float(text))
        except ValueError:
            raise InvalidArgumentError(f"cannot parse fill {text!r}") from None


@dataclass(frozen=True)
class ExpansionConfig:
    factor: int = 2
    fill: Fill = Fill()
    first_kernel_size: int = None

    def __post_init__(self):
        check_int(self.factor, "factor", min_value=1)
        if self.first_kernel_size is not None:
            check_int(self.first_kernel_size, "first_kernel_size", min_value=1)


def validate_factor(cfg):
    """Return ``"warning"`` if the factor exceeds the first kernel size, else ``"ok"``."""
    if cfg.first_kernel_size is None:
        raise InvalidArgumentError("validate_factor needs first_kernel_size")
    return "warning" if cfg.factor > cfg.first_kernel_size else "ok"


def _fill_values(fill, shape, prng):
    if fill.kind == "constant":
        return np.full(shape, fill.value)
    vals = as_prng(prng).normal(fill.mean, fill.std, size=shape)
    if fill.clip is not None:
        vals = np.clip(vals, *fill.clip)
    return vals


def expand_image(img, cfg=ExpansionConfig(), prng=None):
    """Spread an ``H x W x C`` image onto an ``HK x WK x C`` grid.

    ``out[i*K, j*K, c] = img[i, j, c]``; every other entry is a placeholder
    from ``cfg.fill``. A leading batch axis (4-D input) is also accepted.

    Examples
    --------
    >>> expand_image(np.array([[[1.0]]]), ExpansionConfig(factor=2))[..., 0]
    array([[1. , 0.5],
           [0.5, 0.5]])
    """
    img = check_array(img, "img")
    if img.ndim not in (3, 4):
        raise InvalidArgumentError(f"image must be HxWxC or NxHxWxC, got shape {img.shape}")
    k = cfg.factor
    *lead, h, w, c = img.shape
    out_shape = (*lead, h * k, w * k, c)
    out = _fill_values(cfg.fill, out_shape, prng)
    out[..., ::k, ::k, :] = img
    return out


def gather_original(expanded, factor):
    """Inverse of :func:`expand_image`: read back the stride-``K`` anchors."""
    return np.asarray(expanded)[..., ::factor, ::factor, :]


def _parse_pattern(pattern):
    if pattern == "identity":
        return None
    if pattern == "append":
        return "append"
    if pattern == "pinn":
        return "pinn"
    return [tuple(p) for p in pattern]


def expand_vector(v, constants=(), pattern="pinn"):
    """Rearrange ``v`` and ``constants`` according to ``pattern``.

    ``pattern`` is either a list of ``(source, index)`` pairs with source
    ``"v"`` or ``"c"``, or one of the named patterns:

    ``"pinn"``
        per input dimension ``i``: ``v[i], c[i], v[i], c[i], v[i]``, so
        ``[x, t]`` becomes ``[x, xc, x, xc, x, t, tc, t, tc, t]``.
    ``"append"``
        ``v`` followed by ``constants``.
    ``"identity"``
        ``v`` unchanged.
    """
    v = [float(x) for x in np.ravel(v)]
    constants = [float(x) for x in np.ravel(constants)]
    spec = _parse_pattern(pattern)
    if spec is None:
        return list(v)
    if spec == "append":
        return v + constants
    if spec == "pinn":
        if len(constants) != len(v):
            raise InvalidArgumentError(
                f"pinn pattern needs one constant per input, got {len(v)} inputs and {len(constants)} constants"
            )
        spec = []
        for i in range(len(v)):
            spec += [("v", i), ("c", i), ("v", i), ("c", i), ("v", i)]
    out = []
    for src, idx in spec:
        pool = v if src == "v" else constants if src == "c" else None
        if pool is None or not isinstance(idx, (int, np.integer)) or not 0 <= idx < len(pool):
            raise InvalidArgumentError(f"bad pattern entry ({src!r}, {idx!r})")
        out.append(pool[idx])
    return out


def interleave_zeros(v):
    """``[a, b, ...] -> [a, 0, b, 0, ...]`` along the last axis."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 0:
        raise InvalidArgumentError("interleave_zeros needs at least 1-D input")
    out = np.zeros(v.shape[:-1] + (2 * v.shape[-1],))
    out[..., ::2] = v
    return out


class ImageExpander(TransformerMixin, BaseEstimator):
    """Transformer form of :func:`expand_image` for ``(N, H, W, C)`` batches.

    Parameters
    ----------
    factor : int, default=2
    fill : float or "random", default=0.5
    first_kernel_size : int, optional
        When set, ``fit`` emits :class:`ExpansionFactorWarning` if
        ``factor`` exceeds it.
    random_state : int, default=0
        Seed for random fills.
    """

    def __init__(self, factor=2, fill=0.5, first_kernel_size=None, random_state=0):
        self.factor = factor
        self.fill = fill
        self.first_kernel_size = first_kernel_size
        self.random_state = random_state

    def _cfg(self):
        return ExpansionConfig(self.factor, Fill.parse(self.fill), self.first_kernel_size)

    def fit(self, X=None, y=None):
        cfg = self._cfg()
        self.status_ = "ok" if cfg.first_kernel_size is None else validate_factor(cfg)
        if self.status_ == "warning":
            warnings.warn(
                f"expansion factor {cfg.factor} exceeds first kernel size {cfg.first_kernel_size}",
                ExpansionFactorWarning,
                stacklevel=2,
            )
        return self

    def transform(self, X):
        return expand_image(X, self._cfg(), self.random_state)

    def inverse_transform(self, X):
        return gather_original(X, self.factor)


class VectorExpander(TransformerMixin, BaseEstimator):
    """Row-wise :func:`expand_vector`.

    With ``constants=None`` the constants are learned in ``fit`` as the
    column means, which is how the coordinate expansion for physics-informed
    inputs is defined.
    """

    def __init__(self, constants=None, pattern="pinn"):
        self.constants = constants
        self.pattern = pattern

    def fit(self, X, y=None):
        X = check_array(X, "X", ndim=2)
        self.constants_ = (
            X.mean(axis=0) if self.constants is None else np.asarray(self.constants, dtype=np.float64)
        )
        return self

    def transform(self, X):
        X = check_array(X, "X", ndim=2)
        return np.array([expand_vector(row, self.constants_, self.pattern) for row in X])


SWEEP_FACTORS = (1, 2, 3, 4, 5)
SWEEP_FILLS = (0.0, 0.25, 0.5, 1.0, "random")


def sweep(images, factors=SWEEP_FACTORS, fills=SWEEP_FILLS, first_kernel_size=None, seed=0):
    """Expand ``images`` under every (factor, fill) pair of the ablation grid.

    Yields ``(factor, fill, status, expanded)``; ``status`` is the kernel-size
    check result, or ``None`` when no kernel size is given.
    """
    for k in factors:
        for fill in fills:
            cfg = ExpansionConfig(k, Fill.parse(fill), first_kernel_size)
            status = None if first_kernel_size is None else validate_factor(cfg)
            yield k, fill, status, expand_image(images, cfg, as_prng(seed).substream("fill", k, str(fill)))
