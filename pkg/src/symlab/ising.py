"""Two-dimensional periodic Ising model energies and sampled landscapes."""

import csv
from dataclasses import dataclass

import numpy as np

from ._validation import check_int, check_real
from .exceptions import InvalidArgumentError
from .numerics.random import as_prng


@dataclass(frozen=True)
class IsingParams:
    J: float = 1.0
    h: float = 0.0

    def __post_init__(self):
        check_real(self.J, "J")
        check_real(self.h, "h")


def as_lattice(spins):
    """Validate a square ``L x L`` array of +/-1 spins (L >= 2)."""
    s = np.asarray(spins)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise InvalidArgumentError(f"lattice must be square, got shape {s.shape}")
    if s.shape[0] < 2:
        raise InvalidArgumentError(f"lattice side must be >= 2, got {s.shape[0]}")
    if not np.all(np.abs(s) == 1):
        raise InvalidArgumentError("every spin must be exactly -1 or +1")
    return s.astype(np.int64)


def bond_sum(spins):
    """Sum of ``s_i s_j`` over right and down neighbours with periodic wrap.

    Each of the ``2 L^2`` bonds is counted once. Works on a single lattice
    or on a stack ``(..., L, L)``.
    """
    s = np.asarray(spins, dtype=np.int64)
    right = np.roll(s, -1, axis=-1)
    down = np.roll(s, -1, axis=-2)
    return (s * right).sum(axis=(-2, -1)) + (s * down).sum(axis=(-2, -1))


def magnetization(spins):
    return np.asarray(spins, dtype=np.int64).sum(axis=(-2, -1))


def energy(spins, params=IsingParams()):
    """``E = -J * sum_bonds s_i s_j - h * sum_i s_i``."""
    s = as_lattice(spins)
    return -params.J * float(bond_sum(s)) - params.h * float(magnetization(s))


def energies(stack, params=IsingParams()):
    """Vectorised :func:`energy` for an ``(n, L, L)`` stack (integer sums, exact)."""
    stack = np.asarray(stack, dtype=np.int64)
    return -params.J * bond_sum(stack).astype(np.float64) - params.h * magnetization(stack).astype(np.float64)


def sample_lattices(count, L, prng=None):
    """Draw ``count`` lattices with independent fair +/-1 spins, shape ``(count, L, L)``."""
    count = check_int(count, "count", min_value=1)
    L = check_int(L, "L", min_value=2)
    prng = as_prng(prng)
    bits = prng.integers(0, 2, size=(count, L, L))
    return (2 * bits - 1).astype(np.int64)


def all_lattices(L):
    """Every configuration of an ``L x L`` lattice; a test oracle limited to L <= 4."""
    L = check_int(L, "L", min_value=2, max_value=4)
    n = L * L
    idx = np.arange(2**n, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n)) & 1
    return (2 * bits - 1).reshape(-1, L, L)


@dataclass(frozen=True)
class EnergyLandscape:
    energies: np.ndarray
    magnetizations: np.ndarray
    config_ids: np.ndarray
    params: IsingParams

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rank", "energy", "magnetization", "config_id"])
            for rank, (e, m, c) in enumerate(
                zip(self.energies, self.magnetizations, self.config_ids)
            ):
                w.writerow([rank, repr(float(e)), int(m), int(c)])


def landscape_from_stack(stack, params=IsingParams()):
    e = energies(stack, params)
    m = magnetization(stack)
    # stable sort on -e keeps ties in config order
    order = np.argsort(-e, kind="stable")
    return EnergyLandscape(e[order], m[order], order, params)


def energy_landscape(L, count, params=IsingParams(), prng=None, mirrored=False):
    """Energies of ``count`` sampled configurations, sorted descending.

    With ``mirrored=True`` every sampled lattice is followed by its global
    spin flip, so ``2 * count`` configurations are scored and config id
    ``2k + 1`` is the mirror of ``2k``.
    """
    stack = sample_lattices(count, L, prng)
    if mirrored:
        stack = np.stack([stack, -stack], axis=1).reshape(-1, L, L)
    return landscape_from_stack(stack, params)


def distinct_levels(values, tol=1e-9):
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        return 0
    return int(1 + np.count_nonzero(np.diff(v) > tol))


def exhaustive_landscape(L, params=IsingParams()):
    return landscape_from_stack(all_lattices(L), params)

