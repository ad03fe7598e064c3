import collections

import numpy as np
import pytest

from robustcgd import fisher_yates_permutation, new_state
from robustcgd.rng import (
    bulk_doubles,
    bulk_u64,
    next_below,
    next_double,
    next_u64,
    substate,
)


def test_same_seed_same_sequence():
    a = new_state(123)
    b = new_state(123)
    assert [next_u64(a) for _ in range(10)] == [next_u64(b) for _ in range(10)]


def test_bulk_matches_scalar_sequence():
    a = new_state(7)
    b = new_state(7)
    scalar = [next_u64(a) for _ in range(100)]
    bulk = bulk_u64(b, 100).tolist()
    assert scalar == bulk
    assert int(a[0]) == int(b[0])


def test_doubles_in_unit_interval():
    state = new_state(5)
    xs = [next_double(state) for _ in range(1000)]
    assert all(0.0 <= x < 1.0 for x in xs)
    assert abs(np.mean(xs) - 0.5) < 0.05
    ys = bulk_doubles(new_state(5), 1000)
    assert np.array_equal(np.asarray(xs), ys)


def test_next_below_range_and_bias():
    state = new_state(11)
    counts = collections.Counter(next_below(state, 7) for _ in range(14000))
    assert set(counts) == set(range(7))
    for v in counts.values():
        assert abs(v / 14000 - 1 / 7) < 0.02


def test_substate_depends_on_index_not_order():
    parent = new_state(3)
    kids_forward = [int(substate(parent, j)[0]) for j in range(5)]
    kids_backward = [int(substate(parent, j)[0]) for j in reversed(range(5))]
    assert kids_forward == kids_backward[::-1]
    assert len(set(kids_forward)) == 5


def test_permutation_of_single_element():
    assert fisher_yates_permutation(1, new_state(0)).tolist() == [0]


def test_permutation_is_a_permutation():
    perm = fisher_yates_permutation(5, new_state(42))
    assert sorted(perm.tolist()) == [0, 1, 2, 3, 4]


def test_permutation_rejects_zero():
    with pytest.raises(ValueError):
        fisher_yates_permutation(0, new_state(0))


def test_permutation_uniformity_chi_square():
    # all 6 permutations of 3 items within 1/6 +- 0.02 over 10000 seeds
    counts = collections.Counter()
    for seed in range(10000):
        perm = tuple(fisher_yates_permutation(3, new_state(seed)).tolist())
        counts[perm] += 1
    assert len(counts) == 6
    for c in counts.values():
        assert abs(c / 10000 - 1 / 6) < 0.02


def test_permutation_deterministic_given_state():
    p1 = fisher_yates_permutation(50, new_state(9))
    p2 = fisher_yates_permutation(50, new_state(9))
    assert np.array_equal(p1, p2)
