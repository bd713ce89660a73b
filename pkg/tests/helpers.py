"""Small networks shared by the gradient tests and the acceptance run."""

import numpy as np

from symlab.autodiff import NetworkSpec
from symlab.autodiff import layers as L


def _image_batch(rng, n=4, size=6, channels=2):
    x = rng.normal(size=(n, size, size, channels))
    # keep ReLU / max-pool inputs away from kinks
    return x + np.sign(x) * 0.05


def gradient_cases():
    """``name -> (spec, batch, targets, mode, tolerance)`` covering every layer kind."""
    rng = np.random.default_rng(11)
    img = _image_batch(rng)
    labels = np.array([0, 1, 2, 1])
    vec = rng.normal(size=(5, 3))
    reg_targets = rng.normal(size=(5, 2))
    return {
        "dense_tanh_mse": (
            NetworkSpec((3,), (L.dense(4), L.tanh(), L.dense(2)), "mse"),
            vec, reg_targets, "train", 1e-4,
        ),
        "dense_sigmoid_softplus_mse": (
            NetworkSpec((3,), (L.dense(4), L.sigmoid(), L.dense(2), L.softplus()), "mse"),
            vec, reg_targets, "train", 1e-4,
        ),
        "conv_relu_ce": (
            NetworkSpec((6, 6, 2), (L.conv2d(3, 3), L.relu(), L.flatten(), L.dense(3)), "cross_entropy"),
            img, labels, "train", 1e-4,
        ),
        "conv_maxpool_ce": (
            NetworkSpec((6, 6, 2), (L.conv2d(2, 3), L.maxpool2(), L.flatten(), L.dense(3)), "cross_entropy"),
            img, labels, "train", 1e-4,
        ),
        "dropout_train_ce": (
            NetworkSpec((3,), (L.dense(6), L.tanh(), L.dropout(0.3), L.dense(3)), "cross_entropy"),
            vec[:4], labels, "train", 1e-4,
        ),
        "augment_flip_ce": (
            NetworkSpec((6, 6, 2), (L.augment("hflip"), L.conv2d(2, 3), L.tanh(), L.flatten(), L.dense(3)),
                        "cross_entropy"),
            img, labels, "train", 1e-4,
        ),
        "augment_rot180_ce": (
            NetworkSpec((6, 6, 2), (L.augment("rot180"), L.conv2d(2, 3), L.tanh(), L.flatten(), L.dense(3)),
                        "cross_entropy"),
            img, labels, "train", 1e-4,
        ),
        "batchnorm_train_ce": (
            NetworkSpec((6, 6, 2), (L.conv2d(2, 3), L.batchnorm2d(), L.tanh(), L.flatten(), L.dense(3)),
                        "cross_entropy"),
            img, labels, "train", 1e-3,
        ),
        "batchnorm_eval_ce": (
            NetworkSpec((6, 6, 2), (L.conv2d(2, 3), L.batchnorm2d(), L.tanh(), L.flatten(), L.dense(3)),
                        "cross_entropy"),
            img, labels, "eval", 1e-4,
        ),
    }
