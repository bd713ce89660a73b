"""Reverse-mode differentiation over layer stacks, optimizers, and training."""

from .estimator import NetClassifier
from .layers import (
    LayerSpec,
    augment,
    batchnorm2d,
    conv2d,
    dense,
    dropout,
    flatten,
    maxpool2,
    relu,
    sigmoid,
    softplus,
    tanh,
)
from .network import (
    Network,
    NetworkSpec,
    ParamState,
    backward,
    forward,
    gradient_check,
    mean_squared_error,
    softmax_cross_entropy,
)
from .optim import Optimizer, TrainConfig, step
from .training import TrainResult, evaluate_accuracy, predict, train

__all__ = [
    "LayerSpec", "NetClassifier", "Network", "NetworkSpec", "Optimizer", "ParamState",
    "TrainConfig", "TrainResult", "augment", "backward", "batchnorm2d", "conv2d", "dense",
    "dropout", "evaluate_accuracy", "flatten", "forward", "gradient_check", "maxpool2",
    "mean_squared_error", "predict", "relu", "sigmoid", "softmax_cross_entropy", "softplus",
    "step", "tanh", "train",
]
