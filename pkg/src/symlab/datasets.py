"""Synthetic datasets, square-symmetry groups, and CIFAR-10 binary ingestion."""

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_int
from .autodiff.layers import apply_transform
from .exceptions import FormatError, InvalidArgumentError
from .numerics.random import as_prng
from .numerics.tensor_io import write_tensor

TRANSFORMS = ("identity", "rot90", "rot180", "rot270", "hflip", "vflip")


@dataclass
class LabeledImageSet:
    images: np.ndarray  # (N, H, W, C)
    labels: np.ndarray
    name: str
    num_classes: int = 2
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise InvalidArgumentError(f"images must be (N, H, W, C), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise InvalidArgumentError("images and labels differ in length")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InvalidArgumentError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return len(self.labels)

    def subset(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        meta = dict(self.metadata, subset_of=self.name)
        return LabeledImageSet(self.images[idx], self.labels[idx], self.name, self.num_classes, meta)

    def export(self, path):
        """Write images as a flat tensor; labels and metadata go in the sidecar."""
        extra = {
            "name": self.name,
            "labels": self.labels.tolist(),
            "num_classes": self.num_classes,
            "metadata": self.metadata,
        }
        return write_tensor(path, self.images, extra=extra)


def transform_image(image, name):
    """Apply a named square-symmetry transform to one ``(H, W, C)`` image."""
    return apply_transform(np.asarray(image)[None], name)[0]


class TransformGroup:
    """A set of square-symmetry transforms checked for identity and closure."""

    def __init__(self, elements):
        elements = tuple(dict.fromkeys(elements))
        unknown = set(elements) - set(TRANSFORMS)
        if unknown:
            raise InvalidArgumentError(f"unknown transforms {sorted(unknown)}")
        if "identity" not in elements:
            raise InvalidArgumentError("a transform group must contain 'identity'")
        self.elements = elements
        probe = np.arange(9.0).reshape(1, 3, 3, 1)
        images = {e: apply_transform(probe, e) for e in TRANSFORMS}
        for a, b in itertools.product(elements, repeat=2):
            composed = apply_transform(images[b], a)
            if not any(np.array_equal(composed, images[e]) for e in elements):
                raise InvalidArgumentError(f"group not closed: {a} after {b} is outside {elements}")

    def __iter__(self):
        return iter(self.elements)

    def __len__(self):
        return len(self.elements)

    def __repr__(self):
        return f"TransformGroup({list(self.elements)!r})"

    @property
    def has_rotation(self):
        return any(e.startswith("rot") for e in self.elements)


KLEIN_GROUP = ("identity", "rot180", "hflip", "vflip")
C4_GROUP = ("identity", "rot90", "rot180", "rot270")


def gen_scalar_dataset(grid_size=64):
    """Uniform grid ``x_k = (k + 0.5) / M`` with label ``x >= 0.5``.

    Returns
    -------
    x : ndarray of shape (M,)
    labels : ndarray of shape (M,)
    """
    m = check_int(grid_size, "grid_size", min_value=2)
    x = (np.arange(m) + 0.5) / m
    return x, (x >= 0.5).astype(np.int64)


TWO_BY_TWO_VERSION = "2x2-signed-pairs-v2"


def pair_score(image):
    """Signed pair balance of a 2x2 image.

    Each row whose two pixels are equal and non-zero adds that pixel value;
    each such column subtracts it. Flips and 180-degree rotation keep the
    score, a 90-degree rotation negates it, and so does negating the pixels.
    """
    img = np.asarray(image)[..., 0] if np.ndim(image) == 3 else np.asarray(image)
    rows = sum(img[r, 0] for r in range(2) if img[r, 0] == img[r, 1] != 0)
    cols = sum(img[0, c] for c in range(2) if img[0, c] == img[1, c] != 0)
    return float(rows - cols)


def _klein_orbit(image):
    out = []
    for g in KLEIN_GROUP:
        t = transform_image(image, g)
        if not any(np.array_equal(t, o) for o in out):
            out.append(t)
    return out


def gen_2x2_dataset():
    """The fixed 12-image, 2x2, two-class dataset with pixels in {-1, 0, 1}.

    Label 1 iff :func:`pair_score` is positive. The images are the orbits
    under {identity, rot180, hflip, vflip} of five seeds, so the set is
    closed under that group with labels preserved; a 90-degree rotation
    flips the label of every image.
    """
    seeds = [
        [[1, 1], [0, 0]],
        [[-1, -1], [0, 0]],
        [[1, 0], [1, 0]],
        [[-1, 0], [-1, 0]],
        [[1, 1], [0, -1]],
    ]
    images = []
    for s in seeds:
        images += _klein_orbit(np.array(s, dtype=np.float64)[:, :, None])
    images = np.stack(images)
    labels = np.array([int(pair_score(img) > 0) for img in images])
    return LabeledImageSet(
        images,
        labels,
        name=TWO_BY_TWO_VERSION,
        metadata={
            "version": TWO_BY_TWO_VERSION,
            "label_rule": "1 iff (sum over equal non-zero row pairs) - (sum over equal non-zero column pairs) > 0",
            "reconstruction": True,
        },
    )


def verify_group_invariance(dataset, group):
    """Exhaustively check that every ``g . image`` is in the set with the same label.

    Returns
    -------
    dict
        ``{"invariant": bool, "violations": [...]}``; each violation is
        ``{"index", "transform", "reason"}`` where reason is ``"missing"``
        or ``"label"``.
    """
    if not isinstance(group, TransformGroup):
        group = TransformGroup(group)
    images = dataset.images
    if group.has_rotation and images.shape[1] != images.shape[2]:
        raise InvalidArgumentError(f"rotations need square images, got {images.shape[1:3]}")
    lookup = {}
    for i, img in enumerate(images):
        lookup.setdefault(img.tobytes(), set()).add(int(dataset.labels[i]))
    violations = []
    for i, img in enumerate(images):
        for g in group:
            key = np.ascontiguousarray(transform_image(img, g)).tobytes()
            if key not in lookup:
                violations.append({"index": i, "transform": g, "reason": "missing"})
            elif int(dataset.labels[i]) not in lookup[key]:
                violations.append({"index": i, "transform": g, "reason": "label"})
    return {"invariant": not violations, "violations": violations}


BARS_SIZE = 8


def bars_label(image):
    """Oracle for the bars set: 0 if the brightest row is in the top half."""
    img = np.asarray(image)[..., 0]
    return int(np.argmax(img.mean(axis=1)) >= img.shape[0] // 2)


def gen_bars_dataset(n, prng=None, noise=0.1):
    """``n`` 8x8 grayscale images with one full-width horizontal bar.

    Class 0 puts the bar in rows 0-3, class 1 in rows 4-7. The label is
    unchanged by a horizontal flip and swapped by a 180-degree rotation.
    Labels alternate, so classes are balanced to within one image.
    """
    n = check_int(n, "n", min_value=2)
    prng = as_prng(prng)
    half = BARS_SIZE // 2
    labels = np.arange(n) % 2
    rows = prng.integers(0, half, size=n) + half * labels
    images = prng.normal(0.0, noise, size=(n, BARS_SIZE, BARS_SIZE, 1))
    images[np.arange(n), rows, :, 0] += 1.0
    return LabeledImageSet(images, labels, name=f"bars({n})", metadata={"noise": noise})


CIFAR_RECORD = 1 + 32 * 32 * 3


def _parse_cifar_bytes(raw, source):
    if len(raw) == 0 or len(raw) % CIFAR_RECORD:
        complete = len(raw) // CIFAR_RECORD * CIFAR_RECORD
        raise FormatError(
            f"{source}: size {len(raw)} is not a positive multiple of {CIFAR_RECORD}",
            offset=complete,
        )
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise FormatError(f"{source}: label byte {labels[bad[0]]} > 9", offset=int(bad[0]) * CIFAR_RECORD)
    images = rec[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1) / 255.0
    return images, labels


def cifar_files(path):
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("data_batch_*.bin")) + sorted(path.glob("test_batch.bin"))
        if not files:
            files = sorted(path.glob("*.bin"))
        if not files:
            raise FileNotFoundError(f"no CIFAR-10 .bin batches under {path}")
        return files
    if not path.exists():
        raise FileNotFoundError(path)
    return [path]


def load_cifar10(path, count=None, seed=0):
    """Read CIFAR-10 binary batches into a :class:`LabeledImageSet`.

    ``path`` is one batch file or a directory of them. When ``count`` is
    given, a subset of that size is drawn without replacement from a stream
    keyed on ``seed`` and returned in file order.
    """
    images, labels = [], []
    for f in cifar_files(path):
        im, lb = _parse_cifar_bytes(Path(f).read_bytes(), f)
        images.append(im)
        labels.append(lb)
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    ds = LabeledImageSet(images, labels, name="cifar10", num_classes=10, metadata={"source": str(path)})
    if count is None:
        return ds
    idx = cifar_subset_indices(len(ds), count, seed)
    out = ds.subset(idx)
    out.metadata.update(subset_seed=seed, subset_count=int(count), indices=idx.tolist())
    return out


def cifar_subset_indices(total, count, seed):
    count = check_int(count, "count", min_value=1, max_value=total)
    return np.sort(as_prng(seed).substream("cifar_subset").choice(total, size=count, replace=False))
