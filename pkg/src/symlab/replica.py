"""Replica-distance metric: how far apart independently seeded trainings land.

``R`` replicas of one architecture are trained from different seeds, their
flattened weights are PCA-reduced, every pair of reduced vectors is compared
with the 1-D Wasserstein distance (each vector read as a sample of values),
and the distance distribution is summarised by its mean and smoothed peak.
"""

import hashlib
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_array, check_int, check_is_fitted, check_real
from .autodiff import layers as L
from .autodiff.network import Network, NetworkSpec
from .autodiff.optim import TrainConfig
from .autodiff.training import evaluate_accuracy, train
from .datasets import gen_bars_dataset, load_cifar10
from .exceptions import InvalidArgumentError, TrainingDivergedError
from .numerics import (
    density_summary,
    pairwise_wasserstein,
    pca_reduce,
    read_tensor,
    smoothed_histogram,
    write_tensor,
)
from .numerics.random import Prng

ARCHITECTURES = (
    "simple_cnn",
    "dropout_cnn",
    "batchnorm_cnn",
    "flip_equivariance_cnn",
    "rotation_equivariance_cnn",
)


def architecture_spec(arch, input_shape=(8, 8, 1), num_classes=2):
    """Concrete :class:`NetworkSpec` for an architecture id.

    Two 3x3 conv blocks (8 then 16 filters, ReLU, 2x2 max-pool), a 32-unit
    ReLU layer and a linear output. A pool is skipped when its input is
    smaller than 2x2, which happens after the second conv on 8x8 inputs.
    """
    if arch not in ARCHITECTURES:
        raise InvalidArgumentError(f"unknown architecture {arch!r}; choose from {ARCHITECTURES}")
    h, w, _ = input_shape
    layers = []
    if arch == "flip_equivariance_cnn":
        layers.append(L.augment("hflip"))
    elif arch == "rotation_equivariance_cnn":
        layers.append(L.augment("rot180"))
    for filters in (8, 16):
        if h < 3 or w < 3:
            raise InvalidArgumentError(f"input {input_shape} is too small for two 3x3 convolutions")
        layers.append(L.conv2d(filters, 3))
        h, w = h - 2, w - 2
        if arch == "batchnorm_cnn":
            layers.append(L.batchnorm2d())
        layers.append(L.relu())
        if h >= 2 and w >= 2:
            layers.append(L.maxpool2())
            h, w = h // 2, w // 2
    layers += [L.flatten(), L.dense(32), L.relu()]
    if arch == "dropout_cnn":
        layers.append(L.dropout(0.3))
    layers.append(L.dense(num_classes))
    return NetworkSpec(input_shape=tuple(input_shape), layers=tuple(layers), loss="cross_entropy")


@dataclass(frozen=True)
class DatasetSpec:
    """``kind="bars"`` uses ``n`` training and ``test_n`` held-out images drawn
    from ``seed``; ``kind="cifar10_subset"`` reads ``count`` images from
    ``path`` and holds out the last ``test_n`` of them."""

    kind: str = "bars"
    n: int = 100
    test_n: int = 100
    seed: int = 0
    path: str = ""
    count: int = 100

    def __post_init__(self):
        if self.kind not in ("bars", "cifar10_subset"):
            raise InvalidArgumentError(f"dataset kind must be 'bars' or 'cifar10_subset', got {self.kind!r}")
        check_int(self.n, "n", min_value=2)
        check_int(self.test_n, "test_n", min_value=0)
        check_int(self.seed, "dataset seed", min_value=0)
        if self.kind == "cifar10_subset" and self.count <= self.test_n:
            raise InvalidArgumentError("cifar10_subset count must exceed test_n")

    def load(self):
        """Return ``(train_set, test_set_or_None)``."""
        if self.kind == "bars":
            tr = gen_bars_dataset(self.n, _data_prng(self.seed, "train"))
            te = gen_bars_dataset(self.test_n, _data_prng(self.seed, "test")) if self.test_n >= 2 else None
            return tr, te
        ds = load_cifar10(self.path, count=self.count, seed=self.seed)
        cut = len(ds) - self.test_n
        te = ds.subset(np.arange(cut, len(ds))) if self.test_n else None
        return ds.subset(np.arange(cut)), te

    @property
    def input_shape(self):
        return (8, 8, 1) if self.kind == "bars" else (32, 32, 3)

    @property
    def num_classes(self):
        return 2 if self.kind == "bars" else 10


def _data_prng(seed, purpose):
    return Prng(seed).substream("replica_data", purpose)


DESK_PRESET = {"replicas": 20, "epochs": 50}
PAPER_PRESET = {"replicas": 200, "epochs": 200}


@dataclass(frozen=True)
class ReplicaRunSpec:
    arch: str
    dataset: DatasetSpec = DatasetSpec()
    seeds: tuple = tuple(range(DESK_PRESET["replicas"]))
    train: TrainConfig = TrainConfig(epochs=DESK_PRESET["epochs"], batch_size=16)
    reduce_dim: int = 100
    bins: int = 50
    sigma_bins: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.arch not in ARCHITECTURES:
            raise InvalidArgumentError(f"unknown architecture {self.arch!r}")
        if len(self.seeds) < 2:
            raise InvalidArgumentError("a replica run needs at least 2 seeds")
        if len(set(self.seeds)) != len(self.seeds):
            raise InvalidArgumentError("replica seeds must be distinct")
        check_int(self.reduce_dim, "reduce_dim", min_value=1)
        check_int(self.bins, "bins", min_value=2)
        check_real(self.sigma_bins, "sigma_bins", positive=True)

    @classmethod
    def preset(cls, arch, name="desk", dataset=DatasetSpec(), seed_offset=0, **overrides):
        """``name`` is ``"desk"`` (R=20, 50 epochs) or ``"paper"`` (R=200, 200 epochs)."""
        p = {"desk": DESK_PRESET, "paper": PAPER_PRESET}.get(name)
        if p is None:
            raise InvalidArgumentError(f"unknown preset {name!r}")
        seeds = tuple(range(seed_offset, seed_offset + p["replicas"]))
        base = TrainConfig(epochs=p["epochs"], batch_size=16)
        return cls(arch=arch, dataset=dataset, seeds=seeds, train=base, **overrides)

    def network_spec(self):
        return architecture_spec(self.arch, self.dataset.input_shape, self.dataset.num_classes)

    def to_dict(self):
        return {
            "arch": self.arch,
            "dataset": dict(self.dataset.__dict__),
            "seeds": list(self.seeds),
            "train": self.train.to_dict(),
            "reduce_dim": self.reduce_dim,
            "bins": self.bins,
            "sigma_bins": self.sigma_bins,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["dataset"] = DatasetSpec(**d.get("dataset", {}))
        d["train"] = TrainConfig(**d.get("train", {}))
        return cls(**d)

    def training_hash(self):
        """Hash of everything that determines the trained weights."""
        d = self.to_dict()
        for k in ("reduce_dim", "bins", "sigma_bins"):
            d.pop(k)
        return spec_hash(d)


def spec_hash(obj):
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class ReplicaSet:
    """Flattened final weights of the replicas that trained successfully.

    ``failures`` lists ``{"seed", "epoch", "error"}`` for diverged replicas.
    """

    arch: str
    weights: np.ndarray
    seeds: tuple
    test_accuracy: np.ndarray
    failures: list = field(default_factory=list)
    spec_hash: str = ""


def _train_one(net, data, cfg, seed):
    (X, y), test = data
    result = train(net, X, y, replace(cfg, seed=seed))
    acc = np.nan if test is None else evaluate_accuracy(net, result.params, *test)
    return result.params.flat.copy(), acc


def train_replicas(spec, workers=1, cache_dir=None):
    """Train every seed of ``spec`` and stack the flattened weights.

    Rows come out in seed order whatever the worker count. A diverging
    replica is reported in ``failures`` and left out; the rest still train.
    With ``cache_dir`` set, a weight matrix saved under the same training
    hash is reused instead of retraining.
    """
    workers = check_int(workers, "workers", min_value=1)
    h = spec.training_hash()
    cached = _cache_path(cache_dir, spec, h)
    if cached is not None and cached.exists():
        return load_replica_set(cached, expected_hash=h)
    train_set, test_set = spec.dataset.load()
    net = Network(spec.network_spec())
    data = (
        (train_set.images, train_set.labels),
        None if test_set is None else (test_set.images, test_set.labels),
    )

    def run(seed):
        try:
            return _train_one(net, data, spec.train, seed)
        except TrainingDivergedError as exc:
            return exc

    if workers == 1:
        results = [run(s) for s in spec.seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, spec.seeds))
    rows, seeds, accs, failures = [], [], [], []
    for seed, res in zip(spec.seeds, results):
        if isinstance(res, Exception):
            failures.append({"seed": seed, "epoch": res.epoch, "error": str(res)})
            continue
        rows.append(res[0])
        accs.append(res[1])
        seeds.append(seed)
    if failures:
        warnings.warn(f"{len(failures)} replica(s) diverged: seeds {[f['seed'] for f in failures]}", RuntimeWarning, stacklevel=2)
    weights = np.stack(rows) if rows else np.zeros((0, net.n_params))
    out = ReplicaSet(spec.arch, weights, tuple(seeds), np.asarray(accs, dtype=np.float64), failures, h)
    if cached is not None:
        save_replica_set(cached, out)
    return out


def _cache_path(cache_dir, spec, h):
    if cache_dir is None:
        return None
    return Path(cache_dir) / f"{spec.arch}-{h[:16]}.bin"


def save_replica_set(path, rs):
    extra = {
        "arch": rs.arch,
        "seeds": list(rs.seeds),
        "test_accuracy": [None if np.isnan(a) else float(a) for a in rs.test_accuracy],
        "failures": rs.failures,
        "spec_hash": rs.spec_hash,
    }
    return write_tensor(path, rs.weights, extra=extra)


def load_replica_set(path, expected_hash=None):
    weights, meta = read_tensor(path, return_meta=True)
    if expected_hash is not None and meta.get("spec_hash") != expected_hash:
        raise InvalidArgumentError(f"{path}: cached weights belong to a different run spec")
    acc = np.array([np.nan if a is None else a for a in meta.get("test_accuracy", [])], dtype=np.float64)
    return ReplicaSet(
        meta["arch"], weights.reshape(len(meta["seeds"]), -1), tuple(meta["seeds"]),
        acc, meta.get("failures", []), meta.get("spec_hash", ""),
    )


@dataclass
class SymmetryReport:
    """Summary of one architecture's replica distances.

    ``metric_mean`` (the headline number) is the arithmetic mean of the
    ``R(R-1)/2`` distances; ``metric_peak`` is the mode of their smoothed
    histogram.
    """

    arch: str
    distances: np.ndarray
    curve: object
    metric_mean: float
    metric_peak: float
    test_accuracy: float = float("nan")
    failures: list = field(default_factory=list)
    spec_hash: str = ""

    def to_dict(self):
        return {
            "arch": self.arch,
            "distances": self.distances.tolist(),
            "curve": self.curve.to_dict(),
            "metric_mean": self.metric_mean,
            "metric_peak": self.metric_peak,
            "test_accuracy": None if np.isnan(self.test_accuracy) else self.test_accuracy,
            "failures": self.failures,
            "spec_hash": self.spec_hash,
        }

    def write_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def symmetry_metric(weights, d=100, bins=50, sigma_bins=2.0, arch=""):
    """Replica-distance report for an ``R x D`` weight matrix (``R >= 2``)."""
    weights = check_array(weights, "weights", ndim=2, min_rows=2)
    reduced = pca_reduce(weights, d)
    dist = pairwise_wasserstein(reduced)
    curve = smoothed_histogram(dist, bins=bins, sigma_bins=sigma_bins)
    summary = density_summary(curve, dist)
    return SymmetryReport(arch, dist, curve, summary["mean"], summary["peak"])


def run_replica_experiment(spec, workers=1, cache_dir=None):
    rs = train_replicas(spec, workers=workers, cache_dir=cache_dir)
    if len(rs.seeds) < 2:
        raise TrainingDivergedError(epoch=-1)
    rep = symmetry_metric(rs.weights, spec.reduce_dim, spec.bins, spec.sigma_bins, arch=spec.arch)
    acc = rs.test_accuracy[~np.isnan(rs.test_accuracy)]
    rep.test_accuracy = float(acc.mean()) if acc.size else float("nan")
    rep.failures = rs.failures
    rep.spec_hash = spec_hash(spec.to_dict())
    return rep


def compare_architectures(specs, workers=1, cache_dir=None):
    """Run every spec and return reports sorted by ``metric_mean`` descending."""
    specs = list(specs)
    if len(specs) < 2:
        raise InvalidArgumentError("compare_architectures needs at least 2 specs")
    first = specs[0]
    for s in specs[1:]:
        if s.dataset != first.dataset:
            raise InvalidArgumentError(f"dataset mismatch: {s.dataset} vs {first.dataset}")
        if replace(s.train, seed=0) != replace(first.train, seed=0):
            raise InvalidArgumentError("all specs must share one training config")
    reports = [run_replica_experiment(s, workers, cache_dir) for s in specs]
    return sorted(reports, key=lambda r: -r.metric_mean)


def comparison_table(reports):
    return [
        {
            "arch": r.arch,
            "metric_mean": r.metric_mean,
            "metric_peak": r.metric_peak,
            "test_accuracy": None if np.isnan(r.test_accuracy) else r.test_accuracy,
            "pairs": int(r.distances.size),
        }
        for r in reports
    ]


class ReplicaDistance(BaseEstimator):
    """Estimator form of :func:`symmetry_metric`.

    ``fit(W)`` takes an ``R x D`` matrix of flattened replica weights.

    Attributes
    ----------
    distances_ : ndarray of shape (R*(R-1)/2,)
    curve_ : DensityCurve
    metric_mean_, metric_peak_ : float
    """

    def __init__(self, reduce_dim=100, bins=50, sigma_bins=2.0):
        self.reduce_dim = reduce_dim
        self.bins = bins
        self.sigma_bins = sigma_bins

    def fit(self, W, y=None):
        rep = symmetry_metric(W, self.reduce_dim, self.bins, self.sigma_bins)
        self.distances_ = rep.distances
        self.curve_ = rep.curve
        self.metric_mean_ = rep.metric_mean
        self.metric_peak_ = rep.metric_peak
        return self

    def score(self, W, y=None):
        """Mean replica distance of ``W`` (higher means more symmetry breaking)."""
        return symmetry_metric(W, self.reduce_dim, self.bins, self.sigma_bins).metric_mean

    def distance_matrix(self):
        check_is_fitted(self, "distances_")
        m = int(round((1 + np.sqrt(1 + 8 * self.distances_.size)) / 2))
        out = np.zeros((m, m))
        iu = np.triu_indices(m, k=1)
        out[iu] = self.distances_
        return out + out.T
