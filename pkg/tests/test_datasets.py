import json

import numpy as np
import pytest

from symlab.datasets import (
    C4_GROUP,
    CIFAR_RECORD,
    KLEIN_GROUP,
    LabeledImageSet,
    TransformGroup,
    bars_label,
    cifar_subset_indices,
    gen_2x2_dataset,
    gen_bars_dataset,
    gen_scalar_dataset,
    load_cifar10,
    pair_score,
    transform_image,
    verify_group_invariance,
)
from symlab.exceptions import FormatError, InvalidArgumentError
from symlab.numerics import Prng
from symlab.numerics.tensor_io import read_tensor, sidecar_path


def test_scalar_grid_small():
    x, y = gen_scalar_dataset(2)
    assert x.tolist() == [0.25, 0.75] and y.tolist() == [0, 1]


def test_scalar_grid_balanced_and_avoids_half():
    x, y = gen_scalar_dataset(64)
    assert np.count_nonzero(y == 0) == np.count_nonzero(y == 1) == 32
    for m in range(2, 200, 2):
        assert all(2 * k + 1 != m for k in range(m))  # (k + 0.5) / m == 0.5 has no solution
        assert 0.5 not in gen_scalar_dataset(m)[0]


def test_two_by_two_certificate():
    ds = gen_2x2_dataset()
    assert len(ds) == 12 and ds.images.shape == (12, 2, 2, 1)
    assert set(np.unique(ds.images)) <= {-1.0, 0.0, 1.0}
    assert verify_group_invariance(ds, KLEIN_GROUP) == {"invariant": True, "violations": []}
    c4 = verify_group_invariance(ds, C4_GROUP)
    assert not c4["invariant"] and c4["violations"]
    assert set(ds.labels.tolist()) == {0, 1}
    assert len({img.tobytes() for img in ds.images}) == 12
    assert ds.metadata["version"] == ds.name and ds.metadata["reconstruction"]


def test_two_by_two_labels_follow_rule():
    ds = gen_2x2_dataset()
    for img, lab in zip(ds.images, ds.labels):
        assert lab == int(pair_score(img) > 0)
        # every image has at least one equal non-zero pair so the rule never abstains
        assert pair_score(img) != 0


def test_pair_score_symmetries():
    rng = np.random.default_rng(0)
    for _ in range(200):
        img = rng.integers(-1, 2, size=(2, 2, 1)).astype(float)
        s = pair_score(img)
        for g in KLEIN_GROUP:
            assert pair_score(transform_image(img, g)) == s
        assert pair_score(transform_image(img, "rot90")) == -s
        assert pair_score(-img) == -s


def test_identity_group_always_invariant():
    ds = gen_bars_dataset(10, Prng(0))
    assert verify_group_invariance(ds, ["identity"])["invariant"]


def test_constant_image_invariant_under_everything():
    ds = LabeledImageSet(np.ones((1, 3, 3, 1)), [0], "const")
    full = ["identity", "rot90", "rot180", "rot270", "hflip", "vflip"]
    with pytest.raises(InvalidArgumentError):
        TransformGroup(full)  # hflip after rot90 is a diagonal reflection, outside the set
    assert verify_group_invariance(ds, C4_GROUP)["invariant"]
    assert verify_group_invariance(ds, KLEIN_GROUP)["invariant"]


def test_transform_group_validation():
    assert len(TransformGroup(KLEIN_GROUP)) == 4
    with pytest.raises(InvalidArgumentError):
        TransformGroup(["rot90"])
    with pytest.raises(InvalidArgumentError):
        TransformGroup(["identity", "rot90"])
    with pytest.raises(InvalidArgumentError):
        TransformGroup(["identity", "shear"])


def test_rotation_needs_square_images():
    ds = LabeledImageSet(np.zeros((1, 2, 3, 1)), [0], "wide")
    with pytest.raises(InvalidArgumentError):
        verify_group_invariance(ds, C4_GROUP)
    assert verify_group_invariance(ds, ["identity", "hflip"])["invariant"]


def test_missing_versus_label_violation():
    a = np.array([[1.0, 0.0], [0.0, 0.0]])[:, :, None]
    ds = LabeledImageSet(np.stack([a, transform_image(a, "hflip")]), [0, 1], "pair")
    reasons = {v["reason"] for v in verify_group_invariance(ds, ["identity", "hflip"])["violations"]}
    assert reasons == {"label"}
    ds = LabeledImageSet(a[None], [0], "single")
    reasons = {v["reason"] for v in verify_group_invariance(ds, ["identity", "hflip"])["violations"]}
    assert reasons == {"missing"}


def test_bars_symmetries():
    ds = gen_bars_dataset(100, Prng(3))
    assert abs(np.count_nonzero(ds.labels) - 50) <= 1
    for img, lab in zip(ds.images, ds.labels):
        assert bars_label(img) == lab
        assert bars_label(transform_image(img, "hflip")) == lab
        assert bars_label(transform_image(img, "rot180")) == 1 - lab


def test_bars_deterministic():
    a, b = gen_bars_dataset(100, Prng(7)), gen_bars_dataset(100, Prng(7))
    assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)


def _records(labels, rng):
    out = bytearray()
    for lab in labels:
        out.append(lab)
        out += rng.integers(0, 256, size=3072, dtype=np.uint8).tobytes()
    return bytes(out)


def test_cifar_three_records(tmp_path):
    rng = np.random.default_rng(0)
    raw = _records([3, 0, 9], rng)
    (tmp_path / "b.bin").write_bytes(raw)
    ds = load_cifar10(tmp_path / "b.bin")
    assert ds.images.shape == (3, 32, 32, 3) and ds.labels.tolist() == [3, 0, 9]
    rec = np.frombuffer(raw[1:CIFAR_RECORD], dtype=np.uint8)
    # R plane first, then G, then B, each row-major
    assert ds.images[0, 0, 1, 0] == rec[1] / 255.0
    assert ds.images[0, 0, 0, 1] == rec[1024] / 255.0
    assert ds.images[0, 31, 31, 2] == rec[3071] / 255.0


def test_cifar_truncated(tmp_path):
    raw = _records([1, 2], np.random.default_rng(0))[:-5]
    (tmp_path / "t.bin").write_bytes(raw)
    with pytest.raises(FormatError) as err:
        load_cifar10(tmp_path / "t.bin")
    assert err.value.offset == CIFAR_RECORD


def test_cifar_bad_label(tmp_path):
    (tmp_path / "l.bin").write_bytes(_records([1, 12], np.random.default_rng(0)))
    with pytest.raises(FormatError) as err:
        load_cifar10(tmp_path / "l.bin")
    assert err.value.offset == CIFAR_RECORD


def test_cifar_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_cifar10(tmp_path / "none.bin")
    with pytest.raises(FileNotFoundError):
        load_cifar10(tmp_path)


def test_cifar_directory_and_subset(tmp_path):
    rng = np.random.default_rng(1)
    (tmp_path / "data_batch_1.bin").write_bytes(_records(list(range(10)) * 10, rng))
    (tmp_path / "data_batch_2.bin").write_bytes(_records(list(range(10)) * 10, rng))
    full = load_cifar10(tmp_path)
    assert len(full) == 200
    a = load_cifar10(tmp_path, count=100, seed=7)
    b = load_cifar10(tmp_path, count=100, seed=7)
    assert a.metadata["indices"] == b.metadata["indices"]
    assert np.array_equal(a.images, full.images[a.metadata["indices"]])
    assert load_cifar10(tmp_path, count=100, seed=8).metadata["indices"] != a.metadata["indices"]
    with pytest.raises(InvalidArgumentError):
        cifar_subset_indices(200, 201, 0)


def test_export_round_trip(tmp_path):
    ds = gen_2x2_dataset()
    ds.export(tmp_path / "set.bin")
    back = read_tensor(tmp_path / "set.bin")
    assert np.array_equal(back, ds.images)
    side = json.loads(sidecar_path(tmp_path / "set.bin").read_text())
    assert side["labels"] == ds.labels.tolist()


def test_labeled_set_validation():
    with pytest.raises(InvalidArgumentError):
        LabeledImageSet(np.zeros((2, 2, 2, 1)), [0], "x")
    with pytest.raises(InvalidArgumentError):
        LabeledImageSet(np.zeros((1, 2, 2, 1)), [2], "x")
