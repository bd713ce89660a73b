"""Flat little-endian float64 tensors with a JSON shape sidecar.

A tensor ``foo.bin`` is accompanied by ``foo.bin.json``::

    {"shape": [32, 32, 3], "dtype": "float64", "byte_order": "little"}
"""

import json
import math
from pathlib import Path

import numpy as np

from ..exceptions import FormatError

_DTYPE = np.dtype("<f8")


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_tensor(path, array, extra=None):
    array = np.ascontiguousarray(array, dtype=_DTYPE)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(array.tobytes(order="C"))
    meta = {"shape": list(array.shape), "dtype": "float64", "byte_order": "little"}
    if extra:
        meta.update(extra)
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read_tensor(path, return_meta=False):
    path = Path(path)
    side = sidecar_path(path)
    try:
        meta = json.loads(side.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{side}: invalid JSON sidecar: {exc}") from None
    shape = meta.get("shape")
    if (
        not isinstance(shape, list)
        or not shape
        or not all(isinstance(s, int) and s >= 1 for s in shape)
    ):
        raise FormatError(f"{side}: 'shape' must be a non-empty list of positive ints")
    if meta.get("dtype", "float64") != "float64" or meta.get("byte_order", "little") != "little":
        raise FormatError(f"{side}: only little-endian float64 tensors are supported")
    raw = path.read_bytes()
    expected = math.prod(shape) * _DTYPE.itemsize
    if len(raw) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes for shape {shape}, found {len(raw)}",
            offset=min(len(raw), expected),
        )
    array = np.frombuffer(raw, dtype=_DTYPE).reshape(shape).astype(np.float64)
    return (array, meta) if return_meta else array
