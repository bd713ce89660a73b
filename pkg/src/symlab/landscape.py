"""Exhaustive +/-1 weight enumeration for tiny fixed networks.

Bit layout
----------
A configuration index ``i`` in ``[0, 2**N)`` encodes the weights in
layer-major, row-major order: bit ``k`` of ``i`` (least significant first)
sets weight ``k`` to ``+1`` when it is 1 and to ``-1`` when it is 0.

* ``scalar_net``: ``W1 (in x 3)``, ``W2 (3 x 3)``, ``W3 (3 x 2)``,
  ``W4 (2 x 1)`` and, with ``bias="enumerated_first_layer"``, the three
  first-layer biases last.
* ``convnet2x2``: conv filters ``(F, 2, 2)`` filter-major then row-major,
  then ``Wh (F x H)`` and ``Wo (H x 2)``.

Every reduction over samples, masks or orbit elements is an explicit
sequential sum, so the loss of a configuration does not depend on how the
index space is chunked across workers.
"""

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ._validation import check_int, check_real
from .datasets import C4_GROUP, KLEIN_GROUP, TransformGroup, gen_2x2_dataset, gen_scalar_dataset
from .autodiff.layers import apply_transform
from .exceptions import InvalidArgumentError
from .numerics.random import Prng

MAX_BITS = 26
BN_EPS = 1e-5

SCALAR_VARIANTS = ("raw", "expanded")
CONV_VARIANTS = ("baseline", "dropout", "batchnorm", "equivariant", "wrong_equivariant")
BIAS_MODES = ("none", "enumerated_first_layer")
VARIANT_GROUPS = {"equivariant": KLEIN_GROUP, "wrong_equivariant": C4_GROUP}


@dataclass(frozen=True)
class TinyNetSpec:
    """Architecture of one enumerable network.

    ``hidden_sizes`` applies to ``scalar_net``; ``filters``/``hidden`` and the
    dropout settings apply to ``convnet2x2``.
    """

    family: str = "scalar_net"
    variant: str = "raw"
    bias: str = "none"
    hidden_sizes: tuple = (3, 3, 2)
    expand_constant: float = 0.5
    filters: int = 2
    hidden: int = 2
    dropout_rate: float = 0.3
    dropout_masks: int = 8

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))
        if self.family == "scalar_net":
            if self.variant not in SCALAR_VARIANTS:
                raise InvalidArgumentError(f"scalar_net variant must be one of {SCALAR_VARIANTS}")
            if len(self.hidden_sizes) < 1:
                raise InvalidArgumentError("scalar_net needs at least one hidden layer")
        elif self.family == "convnet2x2":
            if self.variant not in CONV_VARIANTS:
                raise InvalidArgumentError(f"convnet2x2 variant must be one of {CONV_VARIANTS}")
            if self.bias != "none":
                raise InvalidArgumentError("convnet2x2 supports bias='none' only")
            check_int(self.filters, "filters", min_value=1)
            check_int(self.hidden, "hidden", min_value=1)
            check_int(self.dropout_masks, "dropout_masks", min_value=1)
            if not 0.0 <= self.dropout_rate < 1.0:
                raise InvalidArgumentError("dropout_rate must lie in [0, 1)")
        else:
            raise InvalidArgumentError(f"unknown family {self.family!r}")
        if self.bias not in BIAS_MODES:
            raise InvalidArgumentError(f"bias must be one of {BIAS_MODES}")

    @property
    def in_dim(self):
        return 2 if self.variant == "expanded" else 1

    def layout(self):
        """Ordered ``(name, shape)`` pairs of enumerated tensors."""
        if self.family == "scalar_net":
            sizes = (self.in_dim,) + self.hidden_sizes + (1,)
            out = [(f"W{i + 1}", (sizes[i], sizes[i + 1])) for i in range(len(sizes) - 1)]
            if self.bias == "enumerated_first_layer":
                out.append(("b1", (self.hidden_sizes[0],)))
            return out
        return [
            ("K", (self.filters, 2, 2)),
            ("Wh", (self.filters, self.hidden)),
            ("Wo", (self.hidden, 2)),
        ]

    @property
    def n_bits(self):
        return sum(int(np.prod(s)) for _, s in self.layout())

    @property
    def group(self):
        g = VARIANT_GROUPS.get(self.variant)
        return None if g is None else TransformGroup(g)

    def to_dict(self):
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def sign_table(n):
    """All ``2**n`` sign vectors; row ``i`` holds the bits of ``i`` mapped to +/-1."""
    idx = np.arange(2**n, dtype=np.int64)
    return np.where((idx[:, None] >> np.arange(n)) & 1, 1.0, -1.0)


def decode(spec, index):
    """Map a configuration index to a dict of weight arrays."""
    n = spec.n_bits
    index = check_int(index, "index", min_value=0, max_value=2**n - 1)
    bits = np.where((index >> np.arange(n)) & 1, 1.0, -1.0)
    out, pos = {}, 0
    for name, shape in spec.layout():
        size = int(np.prod(shape))
        out[name] = bits[pos : pos + size].reshape(shape)
        pos += size
    return out


def encode(spec, weights):
    """Inverse of :func:`decode`."""
    flat = np.concatenate([np.asarray(weights[name]).ravel() for name, _ in spec.layout()])
    if flat.size != spec.n_bits or not np.all(np.abs(flat) == 1):
        raise InvalidArgumentError("weights must be +/-1 and match the spec layout")
    return int(np.sum((flat > 0).astype(np.int64) << np.arange(flat.size, dtype=np.int64)))


def _affine(h, w):
    """``out[..., c, o] = sum_i h[..., i] * w[c, i, o]`` summed in index order.

    ``h`` has shape ``(S, *A, I)`` and ``w`` shape ``(C, I, O)``; the result
    is a fresh C-contiguous ``(S, *A, C, O)`` array.
    """
    extra = (None, None)
    out = h[..., 0][(...,) + extra] * w[:, 0, :]
    for i in range(1, h.shape[-1]):
        out += h[..., i][(...,) + extra] * w[:, i, :]
    return np.ascontiguousarray(out)


def _seq_mean(x, axis):
    """Mean along ``axis`` by a left-to-right sum (chunking-independent)."""
    x = np.moveaxis(x, axis, 0)
    acc = x[0].copy()
    for k in range(1, x.shape[0]):
        acc += x[k]
    return acc / x.shape[0]


def _cross_entropy(logits, labels):
    """Per-sample two-class cross-entropy; ``logits`` is ``(S, ..., 2)``."""
    l0 = np.ascontiguousarray(logits[..., 0])
    l1 = np.ascontiguousarray(logits[..., 1])
    lse = np.logaddexp(l0, l1)
    shape = (-1,) + (1,) * (l0.ndim - 1)
    picked = np.where(np.asarray(labels).reshape(shape) == 1, l1, l0)
    return lse - picked


# --------------------------------------------------------------------------- scalar net


def scalar_inputs(spec, x):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if spec.variant == "expanded":
        return np.stack([x, np.full_like(x, spec.expand_constant)], axis=1)
    return x[:, None]


def _scalar_first(spec, X, w1, b1):
    pre = _affine(X, w1[None])[:, 0, :]
    if b1 is not None:
        pre = pre + b1
    return np.tanh(pre)


def _scalar_rest(h, stacks):
    """Propagate ``(S, U)`` activations through every combination of later layers."""
    for k, w in enumerate(stacks):
        h = _affine(h, w)
        if k < len(stacks) - 1:
            h = np.tanh(h)
    return h[..., 0]


def scalar_net_forward(spec, index, x):
    """Network output for configuration ``index`` at input(s) ``x``."""
    w = decode(spec, index)
    X = scalar_inputs(spec, x)
    n_layers = len(spec.hidden_sizes) + 1
    h = _scalar_first(spec, X, w["W1"], w.get("b1"))
    out = _scalar_rest(h, [w[f"W{k + 1}"][None] for k in range(1, n_layers)])
    out = out.reshape(len(X))
    return float(out[0]) if np.ndim(x) == 0 else out


# --------------------------------------------------------------------------- convnet 2x2


def filter_orbit_canonical(group):
    """Indices ``0..15`` of 2x2 sign filters that are canonical under ``group``.

    A filter is canonical when its row-major sign tuple is lexicographically
    smallest among its images under the group.
    """
    table = sign_table(4)
    keep = []
    for i, f in enumerate(table):
        img = f.reshape(1, 2, 2, 1)
        orbit = [tuple(apply_transform(img, g).ravel()) for g in group]
        if tuple(f) == min(orbit):
            keep.append(i)
    return np.array(keep, dtype=np.int64)


def conv_assignments(spec):
    """Conv-filter part of every enumerated configuration (low ``4F`` bits)."""
    f = spec.filters
    if spec.group is None:
        return np.arange(2 ** (4 * f), dtype=np.int64)
    canon = filter_orbit_canonical(spec.group)
    grids = np.meshgrid(*([canon] * f), indexing="ij")
    idx = np.zeros(grids[0].size, dtype=np.int64)
    for k, g in enumerate(grids):
        idx |= g.ravel().astype(np.int64) << (4 * k)
    return np.sort(idx)


def dropout_masks(spec, n_samples, seed):
    prng = Prng(seed).substream("landscape_dropout")
    keep = prng.random((spec.dropout_masks, n_samples, spec.filters)) >= spec.dropout_rate
    return keep / (1.0 - spec.dropout_rate)


def _conv_features(spec, images, kernels, masks=None):
    """Conv outputs with the variant stage, shape ``(S, C, R, F)``.

    ``R`` indexes orbit elements (equivariant variants), dropout masks, or is
    1 otherwise.
    """
    imgs = images[..., 0]  # (S, 2, 2)
    group = spec.group
    if group is not None:
        views = np.stack([apply_transform(images, g)[..., 0] for g in group], axis=1)  # (S, R, 2, 2)
    else:
        views = imgs[:, None]
    flat_views = views.reshape(views.shape[0], views.shape[1], 4)
    flat_k = kernels.reshape(kernels.shape[0], spec.filters, 4)  # (C, F, 4)
    z = flat_views[:, None, :, None, 0] * flat_k[None, :, None, :, 0]
    for p in range(1, 4):
        z = z + flat_views[:, None, :, None, p] * flat_k[None, :, None, :, p]
    # z: (S, C, R, F)
    if spec.variant == "batchnorm":
        mean = _seq_mean(z, 0)
        var = _seq_mean((z - mean) ** 2, 0)
        z = (z - mean) / np.sqrt(var + BN_EPS)
    elif spec.variant == "dropout":
        if masks is None:
            raise InvalidArgumentError("dropout variant needs masks")
        z = z * masks.transpose(1, 0, 2)[:, None, :, :]
    return np.ascontiguousarray(z)


def _conv_logits(spec, z, wh, wo):
    """Logits for every (conv, Wh, Wo) combination: ``(S, C, R, Ch, Co, 2)``."""
    h = np.tanh(_affine(z, wh))
    return _affine(h, wo)


def _conv_loss_block(spec, images, labels, kernels, wh, wo, masks):
    z = _conv_features(spec, images, kernels, masks)
    logits = _conv_logits(spec, z, wh, wo)
    if spec.group is not None:
        per = _cross_entropy(_seq_mean(logits, 2), labels)  # (S, C, Ch, Co)
    else:
        per = _seq_mean(_cross_entropy(logits, labels), 2)
    return _seq_mean(per, 0)  # (C, Ch, Co)


def convnet2x2_forward(spec, index, images, masks=None):
    """Class logits of configuration ``index``.

    ``images`` is one 2x2 image or a batch ``(S, 2, 2[, 1])``. Batchnorm uses
    the statistics of the given batch. Returns ``(2,)`` for a single image,
    ``(S, 2)`` for a batch, and ``(M, S, 2)`` (one slice per fixed mask)
    for the dropout variant. Equivariant variants return orbit-averaged
    logits.
    """
    single = np.ndim(images) == 2
    images = np.asarray(images, dtype=np.float64).reshape(-1, 2, 2, 1)
    w = decode(spec, index)
    z = _conv_features(spec, images, w["K"][None], masks)
    logits = _conv_logits(spec, z, w["Wh"][None], w["Wo"][None])[:, 0, :, 0, 0, :]  # (S, R, 2)
    if spec.group is not None:
        out = _seq_mean(logits, 1)
    elif spec.variant == "dropout":
        return np.ascontiguousarray(logits.transpose(1, 0, 2))
    else:
        out = logits[:, 0]
    return out[0] if single else out


def config_loss(spec, index, dataset=None, seed=0):
    """Loss of one configuration, computed exactly as in :func:`enumerate_landscape`."""
    w = decode(spec, index)
    if spec.family == "scalar_net":
        x, y = dataset if dataset is not None else gen_scalar_dataset(64)
        h = _scalar_first(spec, scalar_inputs(spec, x), w["W1"], w.get("b1"))
        n_layers = len(spec.hidden_sizes) + 1
        out = _scalar_rest(h, [w[f"W{k + 1}"][None] for k in range(1, n_layers)])
        out = out.reshape(len(out), -1)[:, 0]
        return float(_seq_mean((out - np.asarray(y, dtype=np.float64)) ** 2, 0))
    ds = dataset if dataset is not None else gen_2x2_dataset()
    masks = dropout_masks(spec, len(ds), seed) if spec.variant == "dropout" else None
    loss = _conv_loss_block(spec, ds.images, ds.labels, w["K"][None], w["Wh"][None], w["Wo"][None], masks)
    return float(loss.ravel()[0])


def orbit_average_forward(spec, index, image, group):
    """Mean of baseline logits over ``{g . image : g in group}``."""
    base = TinyNetSpec("convnet2x2", "baseline", filters=spec.filters, hidden=spec.hidden)
    group = group if isinstance(group, TransformGroup) else TransformGroup(group)
    image = np.asarray(image, dtype=np.float64).reshape(1, 2, 2, 1)
    views = [convnet2x2_forward(base, index, apply_transform(image, g)) for g in group]
    acc = views[0].copy()
    for v in views[1:]:
        acc += v
    return acc / len(views)


# --------------------------------------------------------------------------- landscapes


def group_ids_sorted(sorted_desc, tol):
    """Group id per rank: a new level starts when the drop exceeds ``tol``."""
    if sorted_desc.size == 0:
        return np.zeros(0, dtype=np.int64)
    gaps = (sorted_desc[:-1] - sorted_desc[1:]) > tol
    return np.concatenate([[0], np.cumsum(gaps)]).astype(np.int64)


@dataclass
class LossLandscape:
    """Sorted loss values of an enumeration and their degeneracy groups.

    Attributes
    ----------
    losses : ndarray
        Descending.
    config_ids : ndarray
        ``config_ids[r]`` is the configuration with the ``r``-th largest loss.
    group_ids : ndarray
        Degeneracy group per rank.
    multiplicities : ndarray
        Size of each group, in group-id order.
    """

    losses: np.ndarray
    config_ids: np.ndarray
    tol: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.group_ids = group_ids_sorted(self.losses, self.tol)
        self.multiplicities = np.bincount(self.group_ids) if self.losses.size else np.zeros(0, int)
        self._rank = None

    def __len__(self):
        return self.losses.size

    @property
    def min_loss(self):
        return float(self.losses[-1])

    def group_of(self, config_id):
        """Degeneracy group of a configuration index."""
        if self._rank is None:
            self._rank = np.full(int(self.config_ids.max()) + 1, -1, dtype=np.int64)
            self._rank[self.config_ids] = np.arange(self.config_ids.size)
        rank = self._rank[config_id]
        if np.any(rank < 0):
            raise InvalidArgumentError(f"configuration {config_id} is not in this landscape")
        return self.group_ids[rank]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rank", "loss", "multiplicity_group_id"])
            for r, (loss, g) in enumerate(zip(self.losses.tolist(), self.group_ids.tolist())):
                w.writerow([r, repr(loss), g])


def _check_cap(spec):
    if spec.n_bits > MAX_BITS:
        raise InvalidArgumentError(
            f"{spec.n_bits} enumerable bits exceed the cap of {MAX_BITS}"
        )


def _run_chunks(fn, chunks, workers):
    workers = check_int(workers, "workers", min_value=1)
    if workers == 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def _enumerate_scalar(spec, x, y, workers):
    layout = dict(spec.layout())
    n_layers = len(spec.hidden_sizes) + 1
    n1 = int(np.prod(layout["W1"]))
    has_bias = "b1" in layout
    nb = int(np.prod(layout["b1"])) if has_bias else 0
    n_w = spec.n_bits - nb
    X = scalar_inputs(spec, x)
    stacks, shifts, pos = [], [], n1
    for k in range(1, n_layers):
        shape = layout[f"W{k + 1}"]
        size = int(np.prod(shape))
        stacks.append(sign_table(size).reshape((-1,) + shape))
        shifts.append(pos)
        pos += size
    # later-layer index contribution, broadcast over the config axes
    rest_idx = np.zeros((1,) * len(stacks), dtype=np.int64)
    for k, s in enumerate(stacks):
        shape = [1] * len(stacks)
        shape[k] = len(s)
        rest_idx = rest_idx + (np.arange(len(s), dtype=np.int64) << shifts[k]).reshape(shape)
    first = sign_table(n1).reshape(-1, *layout["W1"])
    biases = sign_table(nb) if has_bias else [None]
    outer = [(a, b) for b in range(len(biases)) for a in range(len(first))]
    losses = np.empty(2**spec.n_bits)

    def block(item):
        a, b = item
        h = _scalar_first(spec, X, first[a], biases[b])
        out = _scalar_rest(h, stacks)  # (S, C2, C3, ...)
        loss = _seq_mean((out - y.reshape((-1,) + (1,) * (out.ndim - 1))) ** 2, 0)
        base = a + (b << n_w)
        losses[(rest_idx + base).ravel()] = loss.ravel()

    _run_chunks(block, outer, workers)
    return np.arange(losses.size, dtype=np.int64), losses


def _enumerate_conv(spec, dataset, seed, workers, chunk=32):
    images, labels = dataset.images, dataset.labels
    conv_ids = conv_assignments(spec)
    f = spec.filters
    kernels_all = sign_table(4 * f).reshape(-1, f, 2, 2)
    n_h = f * spec.hidden
    n_o = spec.hidden * 2
    wh = sign_table(n_h).reshape(-1, f, spec.hidden)
    wo = sign_table(n_o).reshape(-1, spec.hidden, 2)
    masks = dropout_masks(spec, len(labels), seed) if spec.variant == "dropout" else None
    dense_idx = (
        (np.arange(len(wh), dtype=np.int64) << (4 * f))[:, None]
        + (np.arange(len(wo), dtype=np.int64) << (4 * f + n_h))[None, :]
    )
    chunks = [conv_ids[i : i + chunk] for i in range(0, len(conv_ids), chunk)]

    def block(ids):
        loss = _conv_loss_block(spec, images, labels, kernels_all[ids], wh, wo, masks)
        return (ids[:, None, None] + dense_idx[None]).ravel(), loss.ravel()

    parts = _run_chunks(block, chunks, workers)
    ids = np.concatenate([p[0] for p in parts])
    losses = np.concatenate([p[1] for p in parts])
    order = np.argsort(ids, kind="stable")
    return ids[order], losses[order]


def enumerate_landscape(spec, dataset=None, loss=None, tol=1e-9, workers=1, seed=0):
    """Evaluate the mean loss of every enumerated configuration.

    Parameters
    ----------
    spec : TinyNetSpec
    dataset : optional
        ``(x, labels)`` for ``scalar_net`` (default: 64-point grid) or a
        :class:`~symlab.datasets.LabeledImageSet` for ``convnet2x2``
        (default: the shipped 2x2 set).
    loss : {"mse", "cross_entropy"}, optional
        Defaults to MSE for ``scalar_net`` and cross-entropy for ``convnet2x2``,
        the only supported pairings.
    tol : float
        Grouping tolerance for degeneracy levels.
    workers : int
        Thread count; the result is identical for any value.
    seed : int
        Seeds the fixed dropout masks.
    """
    _check_cap(spec)
    tol = check_real(tol, "tol", nonnegative=True)
    default_loss = "mse" if spec.family == "scalar_net" else "cross_entropy"
    if loss not in (None, default_loss):
        raise InvalidArgumentError(f"{spec.family} supports loss={default_loss!r} only")
    if spec.family == "scalar_net":
        x, y = dataset if dataset is not None else gen_scalar_dataset(64)
        x = np.asarray(x, dtype=np.float64)
        dataset_id = f"scalar_grid({len(x)})" if dataset is None else "custom_scalar"
        ids, losses = _enumerate_scalar(spec, x, np.asarray(y, dtype=np.float64), workers)
    else:
        ds = dataset if dataset is not None else gen_2x2_dataset()
        dataset_id = ds.name
        ids, losses = _enumerate_conv(spec, ds, seed, workers)
    order = np.argsort(-losses, kind="stable")
    meta = {
        "spec": spec.to_dict(),
        "dataset_id": dataset_id,
        "seed": seed,
        "loss": default_loss,
        "config_count": int(losses.size),
    }
    return LossLandscape(losses[order], ids[order], tol, meta)


def degeneracy_profile(landscape, tol=None):
    """Distinct levels, largest group size, and its share of all configurations."""
    if len(landscape) == 0:
        raise InvalidArgumentError("landscape is empty")
    if tol is not None and tol != landscape.tol:
        mult = np.bincount(group_ids_sorted(landscape.losses, tol))
    else:
        mult = landscape.multiplicities
    return {
        "distinct_levels": int(mult.size),
        "max_multiplicity": int(mult.max()),
        "plateau_fraction": float(mult.max() / len(landscape)),
    }


def profile_json(landscape):
    prof = degeneracy_profile(landscape)
    prof.update(
        config_count=len(landscape),
        spec=landscape.meta.get("spec"),
        dataset_id=landscape.meta.get("dataset_id"),
        seed=landscape.meta.get("seed"),
    )
    return prof


def compare_landscapes(a, b):
    """Field-wise comparison of two landscapes over the same dataset."""
    if a.meta.get("dataset_id") != b.meta.get("dataset_id"):
        raise InvalidArgumentError(
            f"landscapes use different datasets: {a.meta.get('dataset_id')} vs {b.meta.get('dataset_id')}"
        )
    pa, pb = degeneracy_profile(a), degeneracy_profile(b)
    return {
        "min_loss_a": a.min_loss,
        "min_loss_b": b.min_loss,
        "distinct_a": pa["distinct_levels"],
        "distinct_b": pb["distinct_levels"],
        "plateau_a": pa["plateau_fraction"],
        "plateau_b": pb["plateau_fraction"],
        "count_a": len(a),
        "count_b": len(b),
    }


def write_profile(path, landscape):
    with open(path, "w") as fh:
        json.dump(profile_json(landscape), fh, indent=2, sort_keys=True)
        fh.write("\n")
