"""SGD with momentum and Adam over flat parameter vectors."""

from dataclasses import dataclass

import numpy as np

from .._validation import check_int, check_real
from ..exceptions import InvalidArgumentError

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.0
    weight_decay: float = 0.0
    epochs: int = 1
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidArgumentError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        check_real(self.lr, "lr", nonnegative=True)
        check_real(self.momentum, "momentum", nonnegative=True)
        check_real(self.weight_decay, "weight_decay", nonnegative=True)
        check_int(self.epochs, "epochs", min_value=0)
        check_int(self.batch_size, "batch_size", min_value=1)
        check_int(self.seed, "seed", min_value=0)

    def to_dict(self):
        return dict(self.__dict__)


class Optimizer:
    """Holds the slot vectors for one flat parameter vector."""

    def __init__(self, config, n_params):
        self.config = config
        self.t = 0
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)

    def step(self, theta, grad):
        """Update ``theta`` in place and return it."""
        cfg = self.config
        g = grad + cfg.weight_decay * theta
        self.t += 1
        if cfg.optimizer == "sgd":
            self.m = cfg.momentum * self.m + g
            theta -= cfg.lr * self.m
            return theta
        b1, b2 = ADAM_BETAS
        self.m = b1 * self.m + (1 - b1) * g
        self.v = b2 * self.v + (1 - b2) * g * g
        m_hat = self.m / (1 - b1**self.t)
        v_hat = self.v / (1 - b2**self.t)
        theta -= cfg.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        return theta


def step(optimizer, params, grads):
    """Functional form: apply one update to ``params.flat``."""
    optimizer.step(params.flat, grads)
    return params
