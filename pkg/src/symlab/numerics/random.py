"""Seeded random streams with deterministic sub-stream derivation."""

import zlib

import numpy as np

from .._validation import check_int


def _key_word(key):
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return check_int(key, "stream key", min_value=0)


class Prng:
    """A single-owner PCG64 stream identified by ``(seed, *keys)``.

    Two ``Prng`` objects built from the same seed and keys produce the same
    draws. Use :meth:`substream` to hand an independent stream to a worker,
    replica or purpose instead of sharing one generator.

    Parameters
    ----------
    seed : int
        Non-negative root seed.
    keys : tuple of int or str
        Path below the root seed. Strings are hashed with CRC-32.
    """

    algorithm = "pcg64"

    def __init__(self, seed=0, keys=()):
        self.seed = check_int(seed, "seed", min_value=0)
        self.keys = tuple(keys)
        words = tuple(_key_word(k) for k in self.keys)
        self._seq = np.random.SeedSequence(self.seed, spawn_key=words)
        self.generator = np.random.Generator(np.random.PCG64(self._seq))

    def substream(self, *keys):
        return Prng(self.seed, self.keys + tuple(keys))

    def __repr__(self):
        return f"Prng(seed={self.seed}, keys={self.keys!r})"

    # thin delegates used throughout the package
    def random(self, size=None):
        return self.generator.random(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def choice(self, a, size=None, replace=True):
        return self.generator.choice(a, size=size, replace=replace)


def as_prng(seed_or_prng):
    if isinstance(seed_or_prng, Prng):
        return seed_or_prng
    if seed_or_prng is None:
        return Prng(0)
    return Prng(seed_or_prng)
