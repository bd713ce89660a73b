import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from symlab.exceptions import InvalidArgumentError
from symlab.ising import (
    IsingParams,
    all_lattices,
    distinct_levels,
    energy,
    energy_landscape,
    exhaustive_landscape,
    magnetization,
    sample_lattices,
)
from symlab.numerics import Prng

FIELD = IsingParams(J=1.0, h=0.45)


def _naive_energy(s, J, h):
    # independent oracle: explicit double loop over right and down neighbours
    L = len(s)
    bonds = sum(s[i][j] * (s[i][(j + 1) % L] + s[(i + 1) % L][j]) for i in range(L) for j in range(L))
    return -J * bonds - h * sum(map(sum, s))


lattices = st.integers(2, 6).flatmap(
    lambda L: arrays(np.int64, (L, L), elements=st.sampled_from([-1, 1]))
)


def test_all_up_energy():
    assert energy(np.ones((5, 5))) == -50.0


def test_all_up_with_field():
    assert energy(np.ones((5, 5)), FIELD) == -61.25


def test_single_flip_costs_eight():
    s = np.ones((5, 5))
    s[2, 3] = -1
    assert energy(s) == -42.0


@settings(max_examples=60, deadline=None)
@given(lattices, st.floats(-2, 2), st.floats(-2, 2))
def test_matches_naive_loop(s, J, h):
    assert energy(s, IsingParams(J, h)) == pytest.approx(_naive_energy(s.tolist(), J, h), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(lattices)
def test_global_flip_symmetry_without_field(s):
    assert energy(s) == energy(-s)


@settings(max_examples=60, deadline=None)
@given(lattices, st.integers(0, 5), st.integers(0, 5))
def test_translation_invariance(s, dx, dy):
    shifted = np.roll(np.roll(s, dx, axis=0), dy, axis=1)
    assert energy(shifted, FIELD) == energy(s, FIELD)


@settings(max_examples=60, deadline=None)
@given(lattices, st.floats(0, 3))
def test_field_linearity(s, h):
    assert energy(s, IsingParams(1.0, h)) == energy(s) - h * float(s.sum())


def test_energy_bounds_exhaustive():
    for L in (2, 3, 4):
        land = exhaustive_landscape(L, FIELD)
        bound = 2 * L * L + 0.45 * L * L
        assert land.energies.min() >= -bound and land.energies.max() <= bound
        assert land.energies.min() == -bound  # the all-up state saturates it


def test_all_lattices_is_complete_and_distinct():
    stack = all_lattices(3)
    assert stack.shape == (512, 3, 3)
    assert len({s.tobytes() for s in stack}) == 512


def test_invalid_lattices():
    with pytest.raises(InvalidArgumentError):
        energy(np.ones((1, 1)))
    with pytest.raises(InvalidArgumentError):
        energy(np.ones((2, 3)))
    with pytest.raises(InvalidArgumentError):
        energy(np.array([[1, 0], [1, 1]]))
    with pytest.raises(InvalidArgumentError):
        sample_lattices(0, 5, Prng(0))


def test_sampling_deterministic():
    a = sample_lattices(1, 5, Prng(11))
    b = sample_lattices(1, 5, Prng(11))
    assert np.array_equal(a, b)


def test_magnetization_is_unbiased():
    stack = sample_lattices(1000, 5, Prng(0))
    mean_spin = magnetization(stack).sum() / (1000 * 25)
    assert abs(mean_spin) < 3 / math.sqrt(25 * 1000)


def test_landscape_sorted_descending_with_ids():
    land = energy_landscape(5, 200, FIELD, Prng(2))
    assert np.all(np.diff(land.energies) <= 0)
    stack = sample_lattices(200, 5, Prng(2))
    for e, cid in zip(land.energies[:10], land.config_ids[:10]):
        assert e == energy(stack[cid], FIELD)


def test_mirrored_sample_flip_symmetry():
    land = energy_landscape(5, 1000, IsingParams(), Prng(0), mirrored=True)
    by_id = dict(zip(land.config_ids.tolist(), land.energies.tolist()))
    assert all(by_id[2 * k] == by_id[2 * k + 1] for k in range(1000))


def test_field_splits_mirror_pairs():
    land = energy_landscape(5, 1000, FIELD, Prng(0), mirrored=True)
    e = dict(zip(land.config_ids.tolist(), land.energies.tolist()))
    m = dict(zip(land.config_ids.tolist(), land.magnetizations.tolist()))
    for k in range(1000):
        assert e[2 * k] - e[2 * k + 1] == pytest.approx(-2 * 0.45 * m[2 * k], abs=1e-12)


def test_field_gives_at_least_as_many_levels():
    free = energy_landscape(5, 1000, IsingParams(), Prng(0), mirrored=True)
    field = energy_landscape(5, 1000, FIELD, Prng(0), mirrored=True)
    assert distinct_levels(field.energies) >= distinct_levels(free.energies)


def test_csv_output(tmp_path):
    land = energy_landscape(3, 5, FIELD, Prng(1))
    land.write_csv(tmp_path / "e.csv")
    rows = list(csv.reader(open(tmp_path / "e.csv")))
    assert rows[0] == ["rank", "energy", "magnetization", "config_id"]
    assert [float(r[1]) for r in rows[1:]] == land.energies.tolist()
