import itertools
import json

import numpy as np
import pytest
from scipy.stats import wasserstein_distance

from symlab import replica
from symlab.autodiff import Network, TrainConfig
from symlab.exceptions import InvalidArgumentError, TrainingDivergedError
from symlab.replica import (
    ARCHITECTURES,
    DatasetSpec,
    ReplicaDistance,
    ReplicaRunSpec,
    architecture_spec,
    compare_architectures,
    comparison_table,
    load_replica_set,
    run_replica_experiment,
    symmetry_metric,
    train_replicas,
)

TINY_DATA = DatasetSpec(n=20, test_n=10, seed=1)
TINY_TRAIN = TrainConfig(epochs=2, batch_size=8)


def _tiny(arch="simple_cnn", seeds=(0, 1, 2), **kw):
    return ReplicaRunSpec(arch, TINY_DATA, seeds, TINY_TRAIN, reduce_dim=3, bins=10, **kw)


@pytest.fixture(scope="module")
def weights():
    return np.random.default_rng(0).normal(size=(6, 40))


# ----------------------------------------------------------------- metric


def test_pair_count_and_mean(weights):
    rep = symmetry_metric(weights, d=5)
    assert rep.distances.size == 15
    assert rep.metric_mean == pytest.approx(rep.distances.mean(), abs=1e-15)
    assert np.all(rep.distances >= 0)


def test_two_replicas_single_distance(weights):
    rep = symmetry_metric(weights[:2], d=2)
    assert rep.distances.size == 1 and rep.metric_mean == rep.distances[0]


def test_identical_rows_give_zero():
    W = np.tile(np.arange(10.0), (4, 1))
    rep = symmetry_metric(W, d=3)
    assert np.all(rep.distances == 0) and rep.metric_mean == 0.0


def test_distances_match_scipy_on_reduced_rows(weights):
    from symlab.numerics import pca_reduce

    reduced = pca_reduce(weights, 5)
    rep = symmetry_metric(weights, d=5)
    expected = [wasserstein_distance(reduced[i], reduced[j]) for i, j in itertools.combinations(range(6), 2)]
    assert np.allclose(rep.distances, expected, atol=1e-12)


def test_row_permutation_keeps_distance_multiset(weights):
    perm = np.random.default_rng(1).permutation(6)
    a = np.sort(symmetry_metric(weights, d=5).distances)
    b = np.sort(symmetry_metric(weights[perm], d=5).distances)
    assert np.allclose(a, b, atol=1e-12)


def test_positive_scaling(weights):
    a = symmetry_metric(weights, d=5).metric_mean
    b = symmetry_metric(3.5 * weights, d=5).metric_mean
    assert b == pytest.approx(3.5 * a, rel=1e-12)


def test_metric_needs_two_rows():
    with pytest.raises(InvalidArgumentError):
        symmetry_metric(np.zeros((1, 4)))


def test_replica_distance_estimator(weights):
    est = ReplicaDistance(reduce_dim=5, bins=20).fit(weights)
    m = est.distance_matrix()
    assert m.shape == (6, 6) and np.array_equal(m, m.T) and np.all(np.diag(m) == 0)
    assert est.metric_mean_ == pytest.approx(symmetry_metric(weights, d=5, bins=20).metric_mean)
    assert est.score(weights) == est.metric_mean_
    assert est.get_params() == {"reduce_dim": 5, "bins": 20, "sigma_bins": 2.0}


# ----------------------------------------------------------------- architectures


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_architectures_compile(arch):
    net = Network(architecture_spec(arch))
    assert net.output_shape == (2,)
    kinds = [layer.kind for layer in architecture_spec(arch).layers]
    assert kinds.count("conv2d") == 2 and kinds[-1] == "dense"
    assert ("dropout" in kinds) == (arch == "dropout_cnn")
    assert kinds.count("batchnorm2d") == (2 if arch == "batchnorm_cnn" else 0)
    assert ("augment" in kinds) == arch.endswith("equivariance_cnn")


def test_cifar_shape_architecture():
    spec = architecture_spec("simple_cnn", (32, 32, 3), 10)
    assert [layer.kind for layer in spec.layers].count("maxpool2") == 2
    assert Network(spec).output_shape == (10,)


def test_unknown_arch():
    with pytest.raises(InvalidArgumentError):
        architecture_spec("resnet")


# ----------------------------------------------------------------- run specs


def test_run_spec_validation():
    with pytest.raises(InvalidArgumentError):
        _tiny(seeds=(0,))
    with pytest.raises(InvalidArgumentError):
        _tiny(seeds=(1, 1))
    with pytest.raises(InvalidArgumentError):
        ReplicaRunSpec.preset("simple_cnn", "huge")


def test_presets():
    desk = ReplicaRunSpec.preset("simple_cnn")
    paper = ReplicaRunSpec.preset("simple_cnn", "paper")
    assert (len(desk.seeds), desk.train.epochs) == (20, 50)
    assert (len(paper.seeds), paper.train.epochs, paper.reduce_dim) == (200, 200, 100)
    assert ReplicaRunSpec.preset("simple_cnn", seed_offset=100).seeds[0] == 100


def test_run_spec_round_trip_and_hash():
    spec = _tiny()
    again = ReplicaRunSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert again == spec
    assert spec.training_hash() == _tiny(sigma_bins=3.0).training_hash()
    assert spec.training_hash() != _tiny(seeds=(0, 1, 3)).training_hash()


# ----------------------------------------------------------------- training runs


@pytest.fixture(scope="module")
def tiny_set():
    return train_replicas(_tiny())


def test_replicas_distinct_and_reproducible(tiny_set):
    assert tiny_set.weights.shape[0] == 3
    assert not np.array_equal(tiny_set.weights[0], tiny_set.weights[1])
    again = train_replicas(_tiny(), workers=2)
    assert np.array_equal(again.weights, tiny_set.weights)
    assert np.array_equal(again.test_accuracy, tiny_set.test_accuracy)


def test_equal_seed_gives_identical_row(tiny_set):
    other = train_replicas(_tiny(seeds=(1, 7)))
    assert np.array_equal(other.weights[0], tiny_set.weights[1])


def test_cache_reuse(tmp_path, tiny_set, monkeypatch):
    first = train_replicas(_tiny(), cache_dir=tmp_path)
    assert len(list(tmp_path.glob("simple_cnn-*.bin"))) == 1
    monkeypatch.setattr(replica, "_train_one", lambda *a: pytest.fail("cache miss"))
    second = train_replicas(_tiny(sigma_bins=1.0), cache_dir=tmp_path)
    assert np.array_equal(first.weights, second.weights)
    assert np.array_equal(first.weights, tiny_set.weights)


def test_cache_hash_mismatch(tmp_path, tiny_set):
    path = tmp_path / "x.bin"
    replica.save_replica_set(path, tiny_set)
    assert load_replica_set(path, tiny_set.spec_hash).seeds == (0, 1, 2)
    with pytest.raises(InvalidArgumentError):
        load_replica_set(path, "0" * 64)


def test_divergence_reported_per_seed(monkeypatch):
    real = replica._train_one

    def flaky(net, data, cfg, seed):
        if seed == 1:
            raise TrainingDivergedError(epoch=0, loss=float("inf"))
        return real(net, data, cfg, seed)

    monkeypatch.setattr(replica, "_train_one", flaky)
    with pytest.warns(RuntimeWarning, match="seeds \\[1\\]"):
        rs = train_replicas(_tiny())
    assert rs.seeds == (0, 2) and rs.weights.shape[0] == 2
    assert rs.failures[0]["seed"] == 1 and rs.failures[0]["epoch"] == 0
    with pytest.warns(RuntimeWarning):
        rep = run_replica_experiment(_tiny())
    assert rep.failures == rs.failures and rep.distances.size == 1


def test_experiment_report(tmp_path):
    rep = run_replica_experiment(_tiny())
    assert rep.arch == "simple_cnn" and 0.0 <= rep.test_accuracy <= 1.0
    rep.write_json(tmp_path / "r.json")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["metric_mean"] == rep.metric_mean and len(data["distances"]) == 3
    assert data["spec_hash"] == replica.spec_hash(_tiny().to_dict())


def test_compare_architectures_ordering_and_errors():
    reports = compare_architectures([_tiny(), _tiny("dropout_cnn")])
    assert reports[0].metric_mean >= reports[1].metric_mean
    table = comparison_table(reports)
    assert {row["arch"] for row in table} == {"simple_cnn", "dropout_cnn"}
    with pytest.raises(InvalidArgumentError):
        compare_architectures([_tiny()])
    other_data = ReplicaRunSpec("dropout_cnn", DatasetSpec(n=20, test_n=10, seed=2), (0, 1), TINY_TRAIN)
    with pytest.raises(InvalidArgumentError, match="dataset"):
        compare_architectures([_tiny(), other_data])
    other_train = ReplicaRunSpec("dropout_cnn", TINY_DATA, (0, 1), TrainConfig(epochs=3, batch_size=8))
    with pytest.raises(InvalidArgumentError, match="training"):
        compare_architectures([_tiny(), other_train])


def test_bars_dataset_spec():
    train_set, test_set = DatasetSpec(n=30, test_n=12, seed=4).load()
    assert len(train_set) == 30 and len(test_set) == 12
    assert not np.array_equal(train_set.images[:12], test_set.images)
    with pytest.raises(InvalidArgumentError):
        DatasetSpec(kind="mnist")
