"""Network specifications, flat parameter state, and forward/backward passes."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..exceptions import InvalidArgumentError
from ..numerics.random import as_prng
from ..numerics.tensor_io import read_tensor, write_tensor
from .layers import LAYER_TYPES, LayerSpec, Slot

LOSSES = ("cross_entropy", "mse")


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple
    layers: tuple
    loss: str = "cross_entropy"

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.loss not in LOSSES:
            raise InvalidArgumentError(f"loss must be one of {LOSSES}, got {self.loss!r}")

    def to_dict(self):
        return {
            "input_shape": list(self.input_shape),
            "layers": [layer.to_dict() for layer in self.layers],
            "loss": self.loss,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            input_shape=tuple(d["input_shape"]),
            layers=tuple(LayerSpec.from_dict(x) for x in d["layers"]),
            loss=d.get("loss", "cross_entropy"),
        )


class Network:
    """A compiled :class:`NetworkSpec`: layer objects plus flat-vector layout."""

    def __init__(self, spec):
        self.spec = spec
        self.layers = []
        self.param_slots = []
        self.buffer_slots = []
        shape = spec.input_shape
        p_off = b_off = 0
        for i, ls in enumerate(spec.layers):
            layer = LAYER_TYPES[ls.kind](ls, i)
            shape = layer.build(shape)
            ps = {}
            for name, s in layer.param_shapes.items():
                ps[name] = Slot(name, tuple(s), p_off)
                p_off += ps[name].size
            bs = {}
            for name, s in layer.buffer_shapes.items():
                bs[name] = Slot(name, tuple(s), b_off)
                b_off += bs[name].size
            self.layers.append(layer)
            self.param_slots.append(ps)
            self.buffer_slots.append(bs)
        self.output_shape = shape
        self.n_params = p_off
        self.n_buffers = b_off
        if spec.loss == "cross_entropy" and (len(shape) != 1 or shape[0] < 2):
            raise InvalidArgumentError(
                f"cross-entropy needs a flat output with >= 2 classes, got {shape}"
            )

    def views(self, flat, slots):
        return [{k: s.view(flat) for k, s in layer.items()} for layer in slots]

    def layout(self):
        out = []
        for i, (layer, ps) in enumerate(zip(self.layers, self.param_slots)):
            for name, s in ps.items():
                out.append(
                    {"layer": i, "kind": layer.spec.kind, "name": name,
                     "shape": list(s.shape), "offset": s.offset}
                )
        return out

    def init_state(self, prng):
        prng = as_prng(prng)
        state = ParamState(self, np.zeros(self.n_params), np.zeros(self.n_buffers))
        pv = state.param_views()
        bv = state.buffer_views()
        for i, layer in enumerate(self.layers):
            if pv[i]:
                layer.init_params(pv[i], prng.substream("layer", i))
            layer.init_buffers(bv[i])
        return state

    def check_batch(self, batch):
        batch = np.asarray(batch, dtype=np.float64)
        if batch.shape[1:] != self.spec.input_shape:
            raise InvalidArgumentError(
                f"layer 0: batch shape {batch.shape[1:]} does not match input shape "
                f"{self.spec.input_shape}"
            )
        return batch

    def run(self, state, batch, train, prng):
        """Forward pass. Returns ``(outputs, tape)``; ``tape`` feeds :meth:`backprop`."""
        batch = self.check_batch(batch)
        prng = as_prng(prng)
        pv = state.param_views()
        bv = state.buffer_views()
        tape = []
        x = batch
        for i, layer in enumerate(self.layers):
            x, cache = layer.forward(x, pv[i], bv[i], train, prng.substream("layer", i))
            tape.append(cache)
        return x, tape

    def backprop(self, state, tape, grad_out):
        """Reverse pass from ``dL/d(outputs)``. Returns ``(flat_grad, grad_input)``."""
        grad = np.zeros(self.n_params)
        gv = self.views(grad, self.param_slots)
        pv = state.param_views()
        g = grad_out
        for i in range(len(self.layers) - 1, -1, -1):
            g = self.layers[i].backward(g, pv[i], tape[i], gv[i])
        return grad, g

    def updated_buffers(self, state, tape):
        new = state.buffers.copy()
        nv = self.views(new, self.buffer_slots)
        bv = state.buffer_views()
        for i, layer in enumerate(self.layers):
            upd = layer.new_buffers(tape[i], bv[i])
            if upd:
                for k, v in upd.items():
                    nv[i][k][...] = v
        return new


@dataclass
class ParamState:
    """Trainable parameters and non-trainable buffers as flat float64 vectors.

    ``param_views()`` returns per-layer dicts of array views; writing to a
    view writes to ``flat``.
    """

    network: Network
    flat: np.ndarray
    buffers: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.flat = np.ascontiguousarray(self.flat, dtype=np.float64)
        self.buffers = np.ascontiguousarray(self.buffers, dtype=np.float64)
        if self.flat.shape != (self.network.n_params,):
            raise InvalidArgumentError(
                f"expected {self.network.n_params} parameters, got {self.flat.shape}"
            )
        if self.buffers.shape != (self.network.n_buffers,):
            raise InvalidArgumentError(
                f"expected {self.network.n_buffers} buffer values, got {self.buffers.shape}"
            )

    def param_views(self):
        return self.network.views(self.flat, self.network.param_slots)

    def buffer_views(self):
        return self.network.views(self.buffers, self.network.buffer_slots)

    def copy(self):
        return ParamState(self.network, self.flat.copy(), self.buffers.copy())

    def unflatten(self):
        """Per-layer dicts of independent arrays."""
        return [{k: v.copy() for k, v in layer.items()} for layer in self.param_views()]

    @classmethod
    def from_layers(cls, network, layers, buffers=None):
        flat = np.zeros(network.n_params)
        for dst, src in zip(network.views(flat, network.param_slots), layers):
            for k, v in src.items():
                dst[k][...] = v
        if buffers is None:
            buffers = network.init_state(0).buffers
        return cls(network, flat, buffers)

    def save(self, path):
        """Write the flat vector plus a JSON sidecar with layout and buffers."""
        extra = {
            "network": self.network.spec.to_dict(),
            "layout": self.network.layout(),
            "buffers": self.buffers.tolist(),
        }
        return write_tensor(path, self.flat, extra=extra)

    @classmethod
    def load(cls, path):
        flat, meta = read_tensor(Path(path), return_meta=True)
        net = Network(NetworkSpec.from_dict(meta["network"]))
        return cls(net, flat.ravel(), np.asarray(meta.get("buffers", []), dtype=np.float64))


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient with respect to the logits."""
    labels = np.asarray(labels, dtype=np.int64)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def mean_squared_error(outputs, targets):
    targets = np.asarray(targets, dtype=np.float64).reshape(outputs.shape)
    diff = outputs - targets
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def loss_and_grad(spec, outputs, targets):
    if spec.loss == "cross_entropy":
        return softmax_cross_entropy(outputs, targets)
    return mean_squared_error(outputs, targets)


def _compile(net):
    return net if isinstance(net, Network) else Network(net)


def forward(net, params, batch, targets=None, mode="eval", prng=None):
    """Run the network. Returns ``(outputs, loss)``; ``loss`` is None without targets."""
    if mode not in ("train", "eval"):
        raise InvalidArgumentError(f"mode must be 'train' or 'eval', got {mode!r}")
    net = _compile(net)
    out, _ = net.run(params, batch, mode == "train", prng)
    loss = None if targets is None else loss_and_grad(net.spec, out, targets)[0]
    return out, loss


def backward(net, params, batch, targets, prng=None, mode="train"):
    """Gradient of the mean loss with respect to every parameter (flat layout)."""
    net = _compile(net)
    out, tape = net.run(params, batch, mode == "train", prng)
    _, g = loss_and_grad(net.spec, out, targets)
    grad, _ = net.backprop(params, tape, g)
    return grad


def gradient_check(net, params, batch, targets, eps=1e-5, mode="train", seed=0, floor=1e-6):
    """Max relative error between backprop and central finite differences.

    Every evaluation reuses the same random stream, so dropout masks and
    augmentation choices match across the perturbed passes. Entries whose
    combined magnitude is below ``floor`` are scored against ``floor``, since
    a central difference cannot resolve a gradient that is zero by
    construction (a bias feeding train-mode batchnorm) from roundoff.
    """
    net = _compile(net)
    if net.n_params > 10_000:
        raise InvalidArgumentError(f"gradient_check is limited to 10,000 parameters, got {net.n_params}")
    analytic = backward(net, params, batch, targets, prng=as_prng(seed), mode=mode)
    probe = params.copy()
    numeric = np.empty_like(analytic)
    for k in range(net.n_params):
        orig = probe.flat[k]
        probe.flat[k] = orig + eps
        up = forward(net, probe, batch, targets, mode, as_prng(seed))[1]
        probe.flat[k] = orig - eps
        down = forward(net, probe, batch, targets, mode, as_prng(seed))[1]
        probe.flat[k] = orig
        numeric[k] = (up - down) / (2 * eps)
    denom = np.maximum(floor, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))

