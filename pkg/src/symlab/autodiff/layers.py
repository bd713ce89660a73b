"""Layer kinds with hand-written reverse-mode rules.

Activations are channel-last: images are ``(N, H, W, C)``, dense inputs are
``(N, D)``. Each layer exposes ``forward`` returning ``(y, cache)`` and
``backward`` consuming the cache; parameters are views into one flat vector
owned by :class:`~symlab.autodiff.network.ParamState`.
"""

import math
from dataclasses import dataclass, field, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import InvalidArgumentError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

KINDS = (
    "dense",
    "conv2d",
    "maxpool2",
    "relu",
    "tanh",
    "sigmoid",
    "softplus",
    "batchnorm2d",
    "dropout",
    "flatten",
    "augment",
)


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer.

    ``units`` is used by ``dense``, ``filters``/``kernel`` by ``conv2d``,
    ``rate`` by ``dropout`` and ``transform``/``fraction`` by ``augment``.
    """

    kind: str
    units: int = 0
    filters: int = 0
    kernel: int = 3
    rate: float = 0.0
    transform: str = ""
    fraction: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown layer kind {self.kind!r}")
        if self.kind == "dense" and self.units < 1:
            raise InvalidArgumentError("dense layer needs units >= 1")
        if self.kind == "conv2d" and (self.filters < 1 or self.kernel < 1):
            raise InvalidArgumentError("conv2d layer needs filters >= 1 and kernel >= 1")
        if self.kind == "dropout" and not 0.0 <= self.rate < 1.0:
            raise InvalidArgumentError(f"dropout rate must lie in [0, 1), got {self.rate}")
        if self.kind == "augment" and self.transform not in ("hflip", "rot180"):
            raise InvalidArgumentError(f"unsupported augment transform {self.transform!r}")

    def to_dict(self):
        out = {"kind": self.kind}
        for f in fields(self)[1:]:
            value = getattr(self, f.name)
            if value != f.default:
                out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def dense(units):
    return LayerSpec("dense", units=units)


def conv2d(filters, kernel=3):
    return LayerSpec("conv2d", filters=filters, kernel=kernel)


def maxpool2():
    return LayerSpec("maxpool2")


def relu():
    return LayerSpec("relu")


def tanh():
    return LayerSpec("tanh")


def sigmoid():
    return LayerSpec("sigmoid")


def softplus():
    return LayerSpec("softplus")


def batchnorm2d():
    return LayerSpec("batchnorm2d")


def dropout(rate):
    return LayerSpec("dropout", rate=rate)


def flatten():
    return LayerSpec("flatten")


def augment(transform, fraction=0.5):
    return LayerSpec("augment", transform=transform, fraction=fraction)


@dataclass
class Slot:
    """A named parameter or buffer region inside a flat vector."""

    name: str
    shape: tuple
    offset: int
    size: int = field(init=False)

    def __post_init__(self):
        self.size = math.prod(self.shape)

    def view(self, flat):
        return flat[self.offset : self.offset + self.size].reshape(self.shape)


class Layer:
    """Runtime layer. Subclasses set ``param_shapes`` / ``buffer_shapes`` in ``build``."""

    def __init__(self, spec, index):
        self.spec = spec
        self.index = index
        self.param_shapes = {}
        self.buffer_shapes = {}
        self.fan_in = 1

    def build(self, in_shape):
        self.in_shape = in_shape
        self.out_shape = in_shape
        return self.out_shape

    def init_params(self, p, prng):
        bound = 1.0 / math.sqrt(self.fan_in)
        for name, arr in p.items():
            arr[...] = prng.uniform(-bound, bound, size=arr.shape)

    def init_buffers(self, b):
        pass

    def forward(self, x, p, b, train, prng):
        raise NotImplementedError

    def backward(self, g, p, cache, gp):
        raise NotImplementedError

    def new_buffers(self, cache, b):
        return None


class Dense(Layer):
    def build(self, in_shape):
        if len(in_shape) != 1:
            raise InvalidArgumentError(
                f"layer {self.index} (dense) expects flat input, got shape {in_shape}"
            )
        self.in_shape = in_shape
        self.fan_in = in_shape[0]
        self.param_shapes = {"W": (in_shape[0], self.spec.units), "b": (self.spec.units,)}
        self.out_shape = (self.spec.units,)
        return self.out_shape

    def forward(self, x, p, b, train, prng):
        return x @ p["W"] + p["b"], x

    def backward(self, g, p, x, gp):
        gp["W"] += x.T @ g
        gp["b"] += g.sum(axis=0)
        return g @ p["W"].T


class Conv2D(Layer):
    def build(self, in_shape):
        if len(in_shape) != 3:
            raise InvalidArgumentError(
                f"layer {self.index} (conv2d) expects HxWxC input, got shape {in_shape}"
            )
        h, w, c = in_shape
        k = self.spec.kernel
        if h < k or w < k:
            raise InvalidArgumentError(
                f"layer {self.index} (conv2d) kernel {k} exceeds input {h}x{w}"
            )
        self.in_shape = in_shape
        self.fan_in = k * k * c
        self.param_shapes = {"W": (k, k, c, self.spec.filters), "b": (self.spec.filters,)}
        self.out_shape = (h - k + 1, w - k + 1, self.spec.filters)
        return self.out_shape

    def forward(self, x, p, b, train, prng):
        n = x.shape[0]
        k = self.spec.kernel
        ho, wo, f = self.out_shape
        # (N, Ho, Wo, C, k, k) -> (N, Ho, Wo, k, k, C) -> im2col rows
        win = sliding_window_view(x, (k, k), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
        cols = win.reshape(n * ho * wo, -1)
        y = cols @ p["W"].reshape(-1, f) + p["b"]
        return y.reshape(n, ho, wo, f), (cols, x.shape)

    def backward(self, g, p, cache, gp):
        cols, x_shape = cache
        k = self.spec.kernel
        n, ho, wo, f = g.shape
        g2 = g.reshape(-1, f)
        gp["W"] += (cols.T @ g2).reshape(gp["W"].shape)
        gp["b"] += g2.sum(axis=0)
        dcols = (g2 @ p["W"].reshape(-1, f).T).reshape(n, ho, wo, k, k, x_shape[3])
        dx = np.zeros(x_shape)
        for i in range(k):
            for j in range(k):
                dx[:, i : i + ho, j : j + wo, :] += dcols[:, :, :, i, j, :]
        return dx


class MaxPool2(Layer):
    def build(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] < 2 or in_shape[1] < 2:
            raise InvalidArgumentError(
                f"layer {self.index} (maxpool2) needs HxWxC input with H, W >= 2, got {in_shape}"
            )
        h, w, c = in_shape
        self.in_shape = in_shape
        self.out_shape = (h // 2, w // 2, c)
        return self.out_shape

    def forward(self, x, p, b, train, prng):
        n = x.shape[0]
        ho, wo, c = self.out_shape
        xc = x[:, : 2 * ho, : 2 * wo, :]
        blocks = xc.reshape(n, ho, 2, wo, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, 4)
        arg = np.argmax(blocks, axis=-1)
        y = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
        return y, (arg, x.shape)

    def backward(self, g, p, cache, gp):
        arg, x_shape = cache
        n, ho, wo, c = g.shape
        onehot = np.zeros((n, ho, wo, c, 4))
        np.put_along_axis(onehot, arg[..., None], g[..., None], axis=-1)
        dxc = onehot.reshape(n, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, 2 * ho, 2 * wo, c)
        dx = np.zeros(x_shape)
        dx[:, : 2 * ho, : 2 * wo, :] = dxc
        return dx


class ReLU(Layer):
    def forward(self, x, p, b, train, prng):
        mask = x > 0
        return x * mask, mask

    def backward(self, g, p, mask, gp):
        return g * mask


class Tanh(Layer):
    def forward(self, x, p, b, train, prng):
        y = np.tanh(x)
        return y, y

    def backward(self, g, p, y, gp):
        return g * (1.0 - y * y)


class Sigmoid(Layer):
    def forward(self, x, p, b, train, prng):
        y = 0.5 * (1.0 + np.tanh(0.5 * x))
        return y, y

    def backward(self, g, p, y, gp):
        return g * y * (1.0 - y)


class Softplus(Layer):
    def forward(self, x, p, b, train, prng):
        return np.logaddexp(0.0, x), x

    def backward(self, g, p, x, gp):
        return g * 0.5 * (1.0 + np.tanh(0.5 * x))


class BatchNorm2D(Layer):
    """Per-channel normalisation over every axis but the last."""

    def build(self, in_shape):
        c = in_shape[-1]
        self.in_shape = in_shape
        self.out_shape = in_shape
        self.param_shapes = {"gamma": (c,), "beta": (c,)}
        self.buffer_shapes = {"running_mean": (c,), "running_var": (c,)}
        return self.out_shape

    def init_params(self, p, prng):
        p["gamma"][...] = 1.0
        p["beta"][...] = 0.0

    def init_buffers(self, b):
        b["running_mean"][...] = 0.0
        b["running_var"][...] = 1.0

    def forward(self, x, p, b, train, prng):
        axes = tuple(range(x.ndim - 1))
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
        else:
            mean, var = b["running_mean"], b["running_var"]
        inv = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - mean) * inv
        y = p["gamma"] * xhat + p["beta"]
        m = x.size // x.shape[-1]
        return y, (xhat, inv, train, mean, var, m)

    def backward(self, g, p, cache, gp):
        xhat, inv, train, mean, var, m = cache
        axes = tuple(range(g.ndim - 1))
        gp["gamma"] += (g * xhat).sum(axis=axes)
        gp["beta"] += g.sum(axis=axes)
        gx = g * p["gamma"]
        if not train:
            return gx * inv
        return inv * (gx - gx.mean(axis=axes) - xhat * (gx * xhat).mean(axis=axes))

    def new_buffers(self, cache, b):
        xhat, inv, train, mean, var, m = cache
        if not train:
            return None
        unbiased = var * m / max(m - 1, 1)
        return {
            "running_mean": (1 - BN_MOMENTUM) * b["running_mean"] + BN_MOMENTUM * mean,
            "running_var": (1 - BN_MOMENTUM) * b["running_var"] + BN_MOMENTUM * unbiased,
        }


class Dropout(Layer):
    """Inverted dropout: scaled by ``1 / (1 - rate)`` at train time, identity in eval."""

    def forward(self, x, p, b, train, prng):
        rate = self.spec.rate
        if not train or rate == 0.0:
            return x, None
        mask = (prng.random(x.shape) >= rate) / (1.0 - rate)
        return x * mask, mask

    def backward(self, g, p, mask, gp):
        return g if mask is None else g * mask


def apply_transform(images, name):
    """Apply a named square-symmetry transform to a ``(N, H, W, C)`` batch."""
    if name == "identity":
        return images
    if name == "hflip":
        return images[:, :, ::-1, :]
    if name == "vflip":
        return images[:, ::-1, :, :]
    if name == "rot180":
        return images[:, ::-1, ::-1, :]
    if name == "rot90":
        return np.rot90(images, 1, axes=(1, 2))
    if name == "rot270":
        return np.rot90(images, -1, axes=(1, 2))
    raise InvalidArgumentError(f"unknown transform {name!r}")


class Augment(Layer):
    """Train-time transform of a random ``fraction`` of the batch (self-inverse transforms only)."""

    def forward(self, x, p, b, train, prng):
        if not train:
            return x, None
        n = x.shape[0]
        chosen = np.sort(prng.permutation(n)[: int(n * self.spec.fraction)])
        y = x.copy()
        y[chosen] = apply_transform(x[chosen], self.spec.transform)
        return y, chosen

    def backward(self, g, p, chosen, gp):
        if chosen is None:
            return g
        dx = g.copy()
        dx[chosen] = apply_transform(g[chosen], self.spec.transform)
        return dx


class Flatten(Layer):
    def build(self, in_shape):
        self.in_shape = in_shape
        self.out_shape = (math.prod(in_shape),)
        return self.out_shape

    def forward(self, x, p, b, train, prng):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, g, p, shape, gp):
        return g.reshape(shape)


LAYER_TYPES = {
    "dense": Dense,
    "conv2d": Conv2D,
    "maxpool2": MaxPool2,
    "relu": ReLU,
    "tanh": Tanh,
    "sigmoid": Sigmoid,
    "softplus": Softplus,
    "batchnorm2d": BatchNorm2D,
    "dropout": Dropout,
    "flatten": Flatten,
    "augment": Augment,
}
