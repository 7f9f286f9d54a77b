import itertools

import numpy as np
import pytest

from mcrn.assignment import assignment_value, hungarian_max, match_queries_to_centroids
from tests.conftest import unit_rows


def brute_force_max(score):
    n = len(score)
    return max(assignment_value(score, p) for p in itertools.permutations(range(n)))


def test_examples():
    assert hungarian_max([[1, 0], [0, 1]]) == [0, 1]
    assert hungarian_max([[0, 1], [1, 0]]) == [1, 0]
    assert hungarian_max([[5.0]]) == [0]


@pytest.mark.parametrize("bad", [np.zeros((2, 3)), [[1.0, np.inf], [0.0, 1.0]], [[np.nan]]])
def test_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        hungarian_max(bad)


def test_random_4x4_matches_enumeration(rng):
    for _ in range(1000):
        s = rng.normal(size=(4, 4))
        sigma = hungarian_max(s)
        assert sorted(sigma) == [0, 1, 2, 3]
        assert assignment_value(s, sigma) == brute_force_max(s)


def test_ties_resolve_to_identity():
    assert hungarian_max(np.ones((4, 4))) == [0, 1, 2, 3]


def test_row_permutation_invariance(rng):
    for _ in range(100):
        s = rng.normal(size=(5, 5))
        pi = rng.permutation(5)
        sigma = hungarian_max(s)
        sigma_p = hungarian_max(s[pi])
        assert assignment_value(s[pi], sigma_p) == pytest.approx(assignment_value(s, sigma), abs=1e-12)
        # distinct random scores: unique optimum, so the mapping composes with pi
        assert [sigma_p[i] for i in range(5)] == [sigma[pi[i]] for i in range(5)]


def test_row_shift_keeps_optimum(rng):
    for _ in range(100):
        s = rng.normal(size=(4, 4))
        shifted = s + rng.normal(size=(4, 1)) * 3
        sigma = hungarian_max(shifted)
        assert assignment_value(s, sigma) == pytest.approx(brute_force_max(s), abs=1e-12)


def test_match_recovers_shuffle(rng):
    c = unit_rows(rng, 6, 8)
    perm = rng.permutation(6)
    q = c[perm]
    assert match_queries_to_centroids(q, c) == list(perm)


def test_match_singleton_and_mismatch(rng):
    c = unit_rows(rng, 1, 3)
    assert match_queries_to_centroids(unit_rows(rng, 1, 3), c) == [0]
    with pytest.raises(ValueError):
        match_queries_to_centroids(unit_rows(rng, 2, 3), c)


def test_match_random_against_enumeration(rng):
    for _ in range(200):
        q, c = unit_rows(rng, 4, 8), unit_rows(rng, 4, 8)
        sigma = match_queries_to_centroids(q, c)
        score = q @ c.T
        assert assignment_value(score, sigma) == brute_force_max(score)
