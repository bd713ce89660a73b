"""Mini-batch training loop."""

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import InvalidArgumentError, TrainingDivergedError
from ..numerics.random import Prng
from .network import Network, loss_and_grad
from .optim import Optimizer


@dataclass
class TrainResult:
    params: object
    trace: list = field(default_factory=list)


def _accuracy(outputs, y):
    return float(np.mean(np.argmax(outputs, axis=1) == y))


def train(net, X, y, config, eval_data=None, init=None):
    """Train ``net`` on ``(X, y)`` with mini-batches.

    Initialisation, shuffling, and every stochastic layer draw from streams
    derived from ``config.seed``, so equal inputs give bitwise-equal results.
    ``eval_data=(X_test, y_test)`` adds an eval-mode accuracy to each trace
    row.

    Returns
    -------
    TrainResult
        Final :class:`ParamState` and one dict per epoch with ``epoch``,
        ``loss`` and (for cross-entropy) ``accuracy``/``test_accuracy``.
    """
    net = net if isinstance(net, Network) else Network(net)
    if config.epochs < 1:
        raise InvalidArgumentError(f"epochs must be >= 1, got {config.epochs}")
    X = net.check_batch(X)
    classify = net.spec.loss == "cross_entropy"
    y = np.asarray(y, dtype=np.int64 if classify else np.float64)
    n = X.shape[0]
    if n == 0 or y.shape[0] != n:
        raise InvalidArgumentError(f"need matching non-empty data, got {n} inputs and {y.shape[0]} targets")
    if classify and (y.min() < 0 or y.max() >= net.output_shape[0]):
        raise InvalidArgumentError(f"labels must lie in [0, {net.output_shape[0]})")

    root = Prng(config.seed)
    state = init.copy() if init is not None else net.init_state(root.substream("init"))
    opt = Optimizer(config, net.n_params)
    trace = []
    for epoch in range(config.epochs):
        order = root.substream("shuffle", epoch).permutation(n)
        total = correct = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            out, tape = net.run(state, X[idx], True, root.substream("forward", epoch, b))
            loss, g = loss_and_grad(net.spec, out, y[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            grad, _ = net.backprop(state, tape, g)
            state.buffers = net.updated_buffers(state, tape)
            opt.step(state.flat, grad)
            total += loss * len(idx)
            if classify:
                correct += _accuracy(out, y[idx]) * len(idx)
        if not np.all(np.isfinite(state.flat)):
            raise TrainingDivergedError(epoch)
        row = {"epoch": epoch + 1, "loss": total / n}
        if classify:
            row["accuracy"] = correct / n
            if eval_data is not None:
                row["test_accuracy"] = evaluate_accuracy(net, state, *eval_data)
        trace.append(row)
    return TrainResult(params=state, trace=trace)


def predict(net, params, X):
    net = net if isinstance(net, Network) else Network(net)
    out, _ = net.run(params, X, False, None)
    return out


def evaluate_accuracy(net, params, X, y):
    return _accuracy(predict(net, params, X), np.asarray(y))
